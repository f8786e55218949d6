use proptest::prelude::*;

use segopt::activity::{extract_mv_features, mann_whitney_u};
use segopt::bd::{bd_rate, pcc, srocc, RdCurve};
use segopt::constraints::{check_constraints, check_hard, Bounds, ConstraintSet, Mode, Predicted, QualityMetric, Tolerances};
use segopt::encoder::{CodecGrid, SegmentEncoder, SyntheticEncoder, SyntheticLaw};
use segopt::inverse::{newton_solve, round_qp, RoundingContext};
use segopt::media::{plane_psnr, psnr611, psnr_global, split_frames, ssim_mean, Frame, RawVideo};
use segopt::models::{fit_log_poly, RdModel};
use segopt::pareto::{brute_force_front, dominates, front_indices, ObjectivePoint, Speed};
use segopt::records::SweepRecord;

fn video(w: usize, h: usize, luma: Vec<u8>, chroma: u8) -> RawVideo {
    let n = w * h;
    let frames = luma
        .chunks(n)
        .map(|c| Frame {
            y: c.to_vec(),
            u: vec![chroma; n / 4],
            v: vec![chroma.wrapping_add(3); n / 4],
        })
        .collect();
    RawVideo::new(w, h, 25, frames).unwrap()
}

fn luma_pair() -> impl Strategy<Value = (usize, usize, Vec<u8>, Vec<u8>)> {
    (1usize..5, 1usize..5, 1usize..3).prop_flat_map(|(hw, hh, f)| {
        let (w, h) = (hw * 4, hh * 4);
        let n = w * h * f;
        (Just(w), Just(h), prop::collection::vec(any::<u8>(), n), prop::collection::vec(any::<u8>(), n))
    })
}

fn points(by_fps: bool) -> impl Strategy<Value = Vec<ObjectivePoint>> {
    prop::collection::vec((0u8..12, 0u8..12, 1u8..12), 1..80).prop_map(move |v| {
        v.into_iter()
            .map(|(q, b, s)| {
                let speed = if by_fps { Speed::Fps(s as f64) } else { Speed::Seconds(s as f64) };
                ObjectivePoint::new(30.0 + q as f64, 100.0 + b as f64, speed)
            })
            .collect()
    })
}

fn curve() -> impl Strategy<Value = Vec<(f64, f64)>> {
    (4usize..8, 1.0f64..5.0, 0.1f64..0.4).prop_flat_map(|(n, a, s)| {
        prop::collection::vec(-0.4f64..0.4, n).prop_map(move |jit| {
            jit.iter()
                .enumerate()
                .map(|(i, j)| {
                    let q = 30.0 + 12.0 * i as f64 / (n - 1) as f64 + j;
                    ((a + s * q).exp(), q)
                })
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn segments_partition_frames(frames in 1usize..2000, fps in 1u32..120, secs in 0.5f64..6.0) {
        let segs = split_frames(frames, fps as f64, secs).unwrap();
        prop_assert_eq!(segs[0].start, 0);
        prop_assert_eq!(segs.last().unwrap().end, frames);
        let full = ((fps as f64 * secs).floor() as usize).max(1);
        for (i, w) in segs.windows(2).enumerate() {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert_eq!(w[0].frame_count(), full, "segment {}", i);
        }
        prop_assert!(segs.iter().all(|s| s.frame_count() > 0 && s.frame_count() <= full));
    }

    #[test]
    fn psnr611_is_weighted_mean(y in 0.0f64..100.0, u in 0.0f64..100.0, v in 0.0f64..100.0) {
        let p = psnr611(y, u, v);
        prop_assert!((p - (6.0 * y + u + v) / 8.0).abs() < 1e-12);
        prop_assert!(p >= y.min(u).min(v) - 1e-12 && p <= y.max(u).max(v) + 1e-12);
    }

    #[test]
    fn psnr_is_symmetric((w, h, a, b) in luma_pair(), ca in any::<u8>(), cb in any::<u8>()) {
        let (x, y) = (video(w, h, a.clone(), ca), video(w, h, b.clone(), cb));
        let (p, q) = (psnr_global(&x, &y).unwrap(), psnr_global(&y, &x).unwrap());
        prop_assert_eq!(p, q);
        prop_assert_eq!(plane_psnr(&a, &b).unwrap(), plane_psnr(&b, &a).unwrap());
        prop_assert!(p.psnr_y >= 0.0 && p.psnr_y <= 100.0);
    }

    #[test]
    fn ssim_bounds((w, h, a, b) in luma_pair()) {
        let (x, y) = (video(w, h, a, 128), video(w, h, b, 128));
        prop_assert!((ssim_mean(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let s = ssim_mean(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s), "{}", s);
    }

    #[test]
    fn front_matches_brute_force(pts in points(true), seconds in points(false)) {
        for p in [pts, seconds] {
            let front = front_indices(&p).unwrap();
            prop_assert_eq!(&front, &brute_force_front(&p));
            for i in 0..p.len() {
                if front.contains(&i) {
                    prop_assert!(!p.iter().any(|q| dominates(q, &p[i])));
                } else {
                    prop_assert!(front.iter().any(|&f| dominates(&p[f], &p[i])));
                }
            }
        }
    }

    #[test]
    fn front_ignores_input_order(p in points(true), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..p.len()).collect();
        let mut s = seed;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<ObjectivePoint> = idx.iter().map(|&i| p[i]).collect();
        let mut a: Vec<usize> = front_indices(&shuffled).unwrap().into_iter().map(|i| idx[i]).collect();
        a.sort_unstable();
        prop_assert_eq!(a, front_indices(&p).unwrap());
    }

    #[test]
    fn quadratic_fit_recovers(b0 in 1.0f64..16.0, b1 in -0.3f64..0.3, b2 in -0.003f64..0.003) {
        let samples: Vec<(f64, f64)> = (16..=43).step_by(3).map(|q| {
            let q = q as f64;
            (q, (b0 + b1 * q + b2 * q * q).exp())
        }).collect();
        let m = fit_log_poly(&samples, 2).unwrap();
        for (got, want) in m.coefficients.iter().zip([b0, b1, b2]) {
            prop_assert!((got - want).abs() < 1e-8, "{} vs {}", got, want);
        }
        prop_assert!(m.diagnostics.adjusted_r2 <= m.diagnostics.r2 + 1e-12);
    }

    #[test]
    fn fit_never_beats_higher_order(ys in prop::collection::vec(0.5f64..2.0, 10)) {
        let samples: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, y)| (16.0 + 3.0 * i as f64, y.exp())).collect();
        let r2: Vec<f64> = (1..=3).map(|k| fit_log_poly(&samples, k).unwrap().diagnostics.r2).collect();
        prop_assert!(r2[0] <= r2[1] + 1e-9 && r2[1] <= r2[2] + 1e-9, "{:?}", r2);
    }

    #[test]
    fn newton_inverts_prediction(b0 in 8.0f64..16.0, b1 in -0.35f64..-0.05, b2 in 0.0f64..0.002, q in 16.0f64..43.0) {
        prop_assume!(b1 + 2.0 * b2 * 43.0 < -1e-3);
        let m = RdModel::from_coefficients(vec![b0, b1, b2], (16.0, 43.0));
        let qp = newton_solve(&m, m.predict(q), 27.0).unwrap();
        prop_assert!((qp - q).abs() < 1e-6, "{} vs {}", qp, q);
    }

    #[test]
    fn rounding_is_on_the_safe_side(q in 16.0f64..52.0, increasing in any::<bool>()) {
        let f = |x: f64| if increasing { x } else { -x };
        let up = round_qp(q, Mode::MinBitrate, RoundingContext::UpperBound { increasing });
        prop_assert!(f(up as f64) <= f(q) + 1e-9);
        let low = round_qp(q, Mode::MaxQuality, RoundingContext::LowerBound { increasing });
        prop_assert!(f(low as f64) >= f(q) - 1e-9);
        prop_assert!((up as f64 - q).abs() < 1.0 && (low as f64 - q).abs() < 1.0);
    }

    #[test]
    fn tolerance_widens_feasibility(rate in 1000.0f64..20000.0, cap in 1000.0f64..20000.0, fps in 5.0f64..100.0, floor in 5.0f64..100.0) {
        let bounds = Bounds { max_bitrate: Some(cap), min_fps: Some(floor), ..Default::default() };
        let cs = ConstraintSet::new(Mode::MaxQuality, bounds, QualityMetric::Psnr, Tolerances::default()).unwrap();
        let p = Predicted { quality: Some(38.0), bitrate: Some(rate), fps: Some(fps), time: None };
        let hard = check_hard(&p, &cs);
        let soft = check_constraints(&p, &cs);
        if hard.satisfied {
            prop_assert!(soft.satisfied);
        }
        prop_assert!(soft.violations.iter().all(|v| v.overshoot >= 0.0));
        prop_assert!(soft.total_violation() <= hard.total_violation() + 1e-12);
    }

    #[test]
    fn bd_identities(a in curve(), b in curve(), scale in 0.2f64..5.0) {
        let (x, y) = (RdCurve::new("a", a.clone()).unwrap(), RdCurve::new("b", b).unwrap());
        prop_assert!(bd_rate(&x, &x).unwrap().bd_rate.abs() < 1e-12);
        let scaled = RdCurve::new("s", a.iter().map(|&(r, q)| (r * scale, q)).collect()).unwrap();
        prop_assert!((bd_rate(&x, &scaled).unwrap().bd_rate - (scale - 1.0)).abs() < 1e-9);
        if let (Ok(ab), Ok(ba)) = (bd_rate(&x, &y), bd_rate(&y, &x)) {
            prop_assert!(((1.0 + ab.bd_rate) * (1.0 + ba.bd_rate) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn correlations_are_bounded_and_symmetric(xy in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(s) = srocc(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
            prop_assert!((s - srocc(&y, &x).unwrap()).abs() < 1e-12);
        }
        if let Ok(r) = pcc(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn histogram_cdfs(mvs in prop::collection::vec((-40.0f64..40.0, -40.0f64..40.0), 0..200)) {
        let f = extract_mv_features(&mvs, mvs.len() as f64);
        for cdf in [&f.mag_cdf, &f.ori_cdf] {
            prop_assert!(cdf.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            prop_assert!(cdf.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        }
        let moving = mvs.iter().any(|&(x, y)| x != 0.0 || y != 0.0);
        prop_assert_eq!(*f.ori_cdf.last().unwrap() > 0.5, moving);
        prop_assert_eq!(f.vector().len(), f.mag_cdf.len() + f.ori_cdf.len());
    }

    #[test]
    fn mann_whitney_complements(a in prop::collection::vec(0.0f64..10.0, 1..25), b in prop::collection::vec(0.0f64..10.0, 1..25)) {
        let (u_ab, p_ab) = mann_whitney_u(&a, &b);
        let (u_ba, p_ba) = mann_whitney_u(&b, &a);
        let nm = (a.len() * b.len()) as f64;
        prop_assert!((u_ab + u_ba - nm).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&p_ab));
        prop_assert!((p_ab - p_ba).abs() < 1e-12);
    }

    #[test]
    fn sweep_rows_round_trip(i in 0usize..20, seg in 0usize..4) {
        let law = SyntheticLaw::cactus();
        let cfg = CodecGrid::synthetic(&law).enumerate()[i % 20].clone();
        let s = split_frames(500, 50.0, 3.0).unwrap()[seg].clone();
        let m = SyntheticEncoder::new(law).encode(&cfg, &s).unwrap();
        let row = SweepRecord::from_measurement(&m);
        let back: SweepRecord = serde_json::from_str(&serde_json::to_string(&row).unwrap()).unwrap();
        prop_assert_eq!(back.measurement().unwrap(), m);
    }
}
