//! Three-objective Pareto fronts over (quality, bitrate, encoding cost).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::constraints::{check_hard, overshoots, ConstraintSet, Mode, Predicted, QualityMetric};
use crate::encoder::{EncodingConfig, SegmentMeasurement};
use crate::error::{Error, Result};

/// Encoding speed, either as time spent (minimized) or frame rate (maximized).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speed {
    Seconds(f64),
    Fps(f64),
}

impl Speed {
    /// Minimized cost: seconds, or seconds per frame.
    pub fn cost(self) -> f64 {
        match self {
            Speed::Seconds(s) => s,
            Speed::Fps(f) => 1.0 / f,
        }
    }

    fn same_kind(self, other: Speed) -> bool {
        matches!(
            (self, other),
            (Speed::Seconds(_), Speed::Seconds(_)) | (Speed::Fps(_), Speed::Fps(_))
        )
    }

    fn value(self) -> f64 {
        match self {
            Speed::Seconds(v) | Speed::Fps(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub quality: f64,
    pub bitrate: f64,
    pub speed: Speed,
}

impl ObjectivePoint {
    pub fn new(quality: f64, bitrate: f64, speed: Speed) -> Self {
        ObjectivePoint { quality, bitrate, speed }
    }

    /// Point for a measurement using the given quality score and speed orientation.
    pub fn from_measurement(m: &SegmentMeasurement, metric: QualityMetric, by_fps: bool) -> Option<Self> {
        Some(ObjectivePoint {
            quality: m.objective(metric.objective())?,
            bitrate: m.bitrate_kbps,
            speed: if by_fps { Speed::Fps(m.fps) } else { Speed::Seconds(m.enc_time_s) },
        })
    }

    fn key(&self) -> [f64; 3] {
        [-self.quality, self.bitrate, self.speed.cost()]
    }

    pub fn as_predicted(&self) -> Predicted {
        let (fps, time) = match self.speed {
            Speed::Fps(f) => (Some(f), None),
            Speed::Seconds(s) => (None, Some(s)),
        };
        Predicted {
            quality: Some(self.quality),
            bitrate: Some(self.bitrate),
            fps,
            time,
        }
    }
}

/// At least as good everywhere and strictly better somewhere.
pub fn dominates(a: &ObjectivePoint, b: &ObjectivePoint) -> bool {
    let (ka, kb) = (a.key(), b.key());
    ka.iter().zip(&kb).all(|(x, y)| x <= y) && ka.iter().zip(&kb).any(|(x, y)| x < y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront<C> {
    pub entries: Vec<(C, ObjectivePoint)>,
}

impl<C> ParetoFront<C> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Indices of the non-dominated points, in input order.
pub fn front_indices(points: &[ObjectivePoint]) -> Result<Vec<usize>> {
    let first = points.first().ok_or(Error::EmptyInput("pareto points"))?;
    for p in points {
        if !p.speed.same_kind(first.speed) {
            return Err(Error::Mismatch("mixed speed orientations in one front".into()));
        }
        if !(p.quality.is_finite() && p.bitrate.is_finite() && p.speed.value().is_finite()) {
            return Err(Error::Mismatch("non-finite objective value".into()));
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (points[i].key(), points[j].key());
        a.iter()
            .zip(&b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    // anything that could dominate a point sorts before it
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    Ok(front)
}

pub fn pareto_front<C: Clone>(points: &[(C, ObjectivePoint)]) -> Result<ParetoFront<C>> {
    let objs: Vec<ObjectivePoint> = points.iter().map(|p| p.1).collect();
    let idx = front_indices(&objs)?;
    Ok(ParetoFront {
        entries: idx.into_iter().map(|i| points[i].clone()).collect(),
    })
}

fn relative_violation(point: &ObjectivePoint, cs: &ConstraintSet) -> f64 {
    overshoots(&point.as_predicted(), &cs.bounds).iter().map(|o| o.1).sum()
}

/// Mode-optimal feasible entry, or the least-violating one when nothing is
/// feasible. Ties go to lower bitrate, then to lower `qp_of`.
pub fn select_mode_optimal_by<C: Clone>(
    front: &ParetoFront<C>,
    cs: &ConstraintSet,
    qp_of: impl Fn(&C) -> i32,
) -> Result<(C, ObjectivePoint)> {
    if front.entries.is_empty() {
        return Err(Error::EmptyInput("pareto front"));
    }
    let tie = |a: &(C, ObjectivePoint), b: &(C, ObjectivePoint)| {
        a.1.bitrate.total_cmp(&b.1.bitrate).then(qp_of(&a.0).cmp(&qp_of(&b.0)))
    };
    let feasible: Vec<&(C, ObjectivePoint)> = front
        .entries
        .iter()
        .filter(|e| check_hard(&e.1.as_predicted(), cs).satisfied)
        .collect();
    let best = if feasible.is_empty() {
        front.entries.iter().min_by(|a, b| {
            relative_violation(&a.1, cs)
                .total_cmp(&relative_violation(&b.1, cs))
                .then_with(|| tie(a, b))
        })
    } else {
        let score = |e: &(C, ObjectivePoint)| mode_score(&e.1, cs.mode);
        feasible
            .into_iter()
            .min_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| tie(a, b)))
    };
    Ok(best.expect("non-empty").clone())
}

pub fn select_mode_optimal(
    front: &ParetoFront<EncodingConfig>,
    cs: &ConstraintSet,
) -> Result<(EncodingConfig, ObjectivePoint)> {
    select_mode_optimal_by(front, cs, |c| c.qp)
}

fn mode_score(p: &ObjectivePoint, mode: Mode) -> f64 {
    match mode {
        Mode::MaxQuality => p.quality,
        Mode::MinBitrate => -p.bitrate,
        Mode::MaxEncRate | Mode::MinEncTime => -p.speed.cost(),
    }
}

/// Brute-force non-dominated set, for cross-checking.
pub fn brute_force_front(points: &[ObjectivePoint]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{Bounds, Tolerances};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(q: f64, b: f64, t: f64) -> ObjectivePoint {
        ObjectivePoint::new(q, b, Speed::Seconds(t))
    }

    #[test]
    fn dominance_examples() {
        let a = pt(40.0, 1000.0, 5.0);
        assert!(dominates(&a, &pt(39.0, 1200.0, 6.0)));
        assert!(!dominates(&a, &a));
        let c = pt(41.0, 900.0, 6.0);
        assert!(!dominates(&a, &c) && !dominates(&c, &a));
    }

    #[test]
    fn fps_orientation_is_maximized() {
        let fast = ObjectivePoint::new(40.0, 1000.0, Speed::Fps(30.0));
        let slow = ObjectivePoint::new(40.0, 1000.0, Speed::Fps(20.0));
        assert!(dominates(&fast, &slow));
        assert!(front_indices(&[fast, pt(1.0, 1.0, 1.0)]).is_err());
    }

    #[test]
    fn small_fronts() {
        let single = [((), pt(1.0, 2.0, 3.0))];
        assert_eq!(pareto_front(&single).unwrap().len(), 1);
        let chain = [pt(40.0, 1000.0, 5.0), pt(39.0, 1100.0, 6.0), pt(38.0, 1200.0, 7.0)];
        assert_eq!(front_indices(&chain).unwrap(), vec![0]);
        let dup = [pt(40.0, 1000.0, 5.0), pt(40.0, 1000.0, 5.0)];
        assert_eq!(front_indices(&dup).unwrap(), vec![0, 1]);
        assert!(pareto_front::<()>(&[]).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..300);
            // coarse values force ties
            let pts: Vec<_> = (0..n)
                .map(|_| {
                    pt(
                        rng.random_range(0..20) as f64,
                        rng.random_range(0..20) as f64,
                        rng.random_range(0..20) as f64,
                    )
                })
                .collect();
            assert_eq!(front_indices(&pts).unwrap(), brute_force_front(&pts));
        }
    }

    fn jockey_front() -> ParetoFront<(&'static str, i32)> {
        ParetoFront {
            entries: vec![
                (("B2 superfast", 22), pt(42.8, 4167.3, 4.8)),
                (("B2 medium", 32), pt(39.1, 1049.2, 6.9)),
                (("ZL faster", 37), pt(36.0, 620.0, 2.1)),
                (("B6 slow", 22), pt(43.4, 3900.0, 11.5)),
                (("AI ultrafast", 27), pt(41.0, 9800.0, 1.7)),
            ],
        }
    }

    #[test]
    fn jockey_max_quality() {
        let cs = ConstraintSet::new(
            Mode::MaxQuality,
            Bounds {
                max_time: Some(5.0),
                max_bitrate: Some(5000.0),
                ..Default::default()
            },
            QualityMetric::Psnr,
            Tolerances::default(),
        )
        .unwrap();
        let (cfg, p) = select_mode_optimal_by(&jockey_front(), &cs, |c| c.1).unwrap();
        assert_eq!(cfg.0, "B2 superfast");
        assert_eq!((p.quality, p.bitrate, p.speed), (42.8, 4167.3, Speed::Seconds(4.8)));
    }

    #[test]
    fn least_violation_fallback() {
        let cs = ConstraintSet::new(
            Mode::MaxQuality,
            Bounds {
                max_time: Some(20.0),
                max_bitrate: Some(500.0),
                ..Default::default()
            },
            QualityMetric::Psnr,
            Tolerances::default(),
        )
        .unwrap();
        let (cfg, _) = select_mode_optimal_by(&jockey_front(), &cs, |c| c.1).unwrap();
        assert_eq!(cfg.0, "ZL faster");
    }

    #[test]
    fn single_feasible_entry_wins() {
        let cs = ConstraintSet::new(
            Mode::MinEncTime,
            Bounds {
                min_quality: Some(43.0),
                max_bitrate: Some(5000.0),
                ..Default::default()
            },
            QualityMetric::Psnr,
            Tolerances::default(),
        )
        .unwrap();
        let (cfg, _) = select_mode_optimal_by(&jockey_front(), &cs, |c| c.1).unwrap();
        assert_eq!(cfg.0, "B6 slow");
    }
}
