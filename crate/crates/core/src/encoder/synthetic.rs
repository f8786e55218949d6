use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EncodingConfig, SegmentEncoder, SegmentMeasurement};
use crate::error::{Error, Result};
use crate::media::Segment;
use crate::models::Objective;

/// Natural-log polynomial coefficients `(α, β1, β2, ...)` per objective for one GOP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawCoefficients {
    pub psnr: Vec<f64>,
    pub vmaf: Vec<f64>,
    #[serde(default)]
    pub ssim: Option<Vec<f64>>,
    pub bits: Vec<f64>,
    pub enc_rate: Vec<f64>,
}

impl LawCoefficients {
    pub fn get(&self, objective: Objective) -> Option<&[f64]> {
        match objective {
            Objective::Psnr => Some(&self.psnr),
            Objective::Vmaf => Some(&self.vmaf),
            Objective::Ssim => self.ssim.as_deref(),
            Objective::Bits => Some(&self.bits),
            Objective::EncRate => Some(&self.enc_rate),
        }
    }
}

/// Log-domain offsets added when any in-loop filter is enabled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveOffsets {
    pub psnr: f64,
    pub vmaf: f64,
    pub ssim: f64,
    pub bits: f64,
    pub enc_rate: f64,
}

impl ObjectiveOffsets {
    pub fn get(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Psnr => self.psnr,
            Objective::Vmaf => self.vmaf,
            Objective::Ssim => self.ssim,
            Objective::Bits => self.bits,
            Objective::EncRate => self.enc_rate,
        }
    }
}

/// Ground-truth rate/quality/speed law of the synthetic encoder:
/// `objective = exp(α + β1·QP + β2·QP² + offset)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLaw {
    pub gops: Vec<(String, LawCoefficients)>,
    pub filter_offsets: ObjectiveOffsets,
    /// Standard deviation of log-domain noise; zero makes the law exact.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-segment log offset on bitrate (cycled), modelling content changes.
    #[serde(default)]
    pub segment_bits_drift: Vec<f64>,
}

// ln(SSIM) has no fitted model to draw from; this curve gives
// SSIM ≈ 0.97 at QP 16 falling to ≈ 0.90 at QP 43.
const DEFAULT_SSIM: [f64; 3] = [-0.00676, -0.001004, -3.0e-5];

impl Default for SyntheticLaw {
    fn default() -> Self {
        SyntheticLaw::basketball_drive()
    }
}

impl SyntheticLaw {
    /// B6 models fitted on a 1080p50 basketball clip (maximum-quality run).
    pub fn basketball_drive() -> Self {
        SyntheticLaw {
            gops: vec![(
                "B6".into(),
                LawCoefficients {
                    psnr: vec![3.866, -0.005, -6.521e-05],
                    vmaf: vec![3.965, 0.058, -0.001298],
                    ssim: Some(DEFAULT_SSIM.to_vec()),
                    bits: vec![15.946, -0.304, 0.0024092],
                    enc_rate: vec![1.872, 0.095, 0.0098901],
                },
            )],
            filter_offsets: Self::default_offsets(),
            noise_sigma: 0.0,
            seed: 0,
            segment_bits_drift: Vec::new(),
        }
    }

    /// B2/B3/B4 models fitted on a 1080p50 clip with rotational motion.
    pub fn cactus() -> Self {
        let ssim = Some(DEFAULT_SSIM.to_vec());
        SyntheticLaw {
            gops: vec![
                (
                    "B2".into(),
                    LawCoefficients {
                        psnr: vec![3.89, -0.00854, -4.36249e-05],
                        vmaf: vec![3.84, 0.066985, -0.00149858],
                        ssim: ssim.clone(),
                        bits: vec![16.97, -0.337398, 0.00244438],
                        enc_rate: vec![0.69, 0.1580597, -0.001727],
                    },
                ),
                (
                    "B3".into(),
                    LawCoefficients {
                        psnr: vec![3.86, -0.00661, -7.489899e-05],
                        vmaf: vec![3.80, 0.069566, -0.0015476],
                        ssim: ssim.clone(),
                        bits: vec![16.65, -0.319803, 0.002179],
                        enc_rate: vec![0.706, 0.153, -0.001585],
                    },
                ),
                (
                    "B4".into(),
                    LawCoefficients {
                        psnr: vec![3.86, -0.006686, -7.314043e-05],
                        vmaf: vec![3.822, 0.0684533, -0.0015321],
                        ssim,
                        bits: vec![16.519, -0.313125, 0.00210119],
                        enc_rate: vec![0.4027, 0.173966, -0.0018987],
                    },
                ),
            ],
            filter_offsets: Self::default_offsets(),
            noise_sigma: 0.0,
            seed: 0,
            segment_bits_drift: Vec::new(),
        }
    }

    fn default_offsets() -> ObjectiveOffsets {
        ObjectiveOffsets {
            psnr: 0.003,
            vmaf: 0.003,
            ssim: 0.001,
            bits: -0.005,
            enc_rate: -0.05,
        }
    }

    pub fn gops(&self) -> impl Iterator<Item = &str> {
        self.gops.iter().map(|(g, _)| g.as_str())
    }

    pub fn coefficients(&self, gop: &str) -> Option<&LawCoefficients> {
        self.gops.iter().find(|(g, _)| g == gop).map(|(_, c)| c)
    }

    /// Noise-free log value of `objective` at `qp`.
    pub fn log_value(&self, gop: &str, filters_on: bool, objective: Objective, qp: f64) -> Option<f64> {
        let coeffs = self.coefficients(gop)?.get(objective)?;
        let poly = coeffs.iter().rev().fold(0.0, |acc, &c| acc * qp + c);
        let offset = if filters_on { self.filter_offsets.get(objective) } else { 0.0 };
        Some(poly + offset)
    }

    /// Noise-free value of `objective` at `qp`.
    pub fn value(&self, gop: &str, filters_on: bool, objective: Objective, qp: f64) -> Option<f64> {
        self.log_value(gop, filters_on, objective, qp).map(f64::exp)
    }
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Evaluates the law for `config` on `segment`. Deterministic: the optional
/// noise is seeded from the law seed, the segment index and the configuration.
pub fn synth_encode(config: &EncodingConfig, law: &SyntheticLaw, segment: &Segment) -> Result<SegmentMeasurement> {
    if law.coefficients(&config.gop).is_none() {
        return Err(Error::UnknownGop {
            codec: config.codec.to_string(),
            gop: config.gop.clone(),
        });
    }
    let qp = config.qp as f64;
    let on = config.filters.any();
    let mut rng = (law.noise_sigma > 0.0).then(|| {
        let mut h = fnv1a(&law.seed.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
        h = fnv1a(&(segment.index as u64).to_le_bytes(), h);
        h = fnv1a(config.to_string().as_bytes(), h);
        ChaCha8Rng::seed_from_u64(h)
    });
    let noise = Normal::new(0.0, law.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut eval = |objective: Objective| -> Option<f64> {
        let mut v = law.log_value(&config.gop, on, objective, qp)?;
        if let Some(rng) = rng.as_mut() {
            v += noise.sample(rng);
        }
        if objective == Objective::Bits && !law.segment_bits_drift.is_empty() {
            v += law.segment_bits_drift[segment.index % law.segment_bits_drift.len()];
        }
        Some(v.exp())
    };
    let psnr = eval(Objective::Psnr).expect("psnr law present");
    let vmaf = eval(Objective::Vmaf).map(|v| v.min(100.0));
    let ssim = eval(Objective::Ssim).map(|v| v.min(1.0));
    let bitrate = eval(Objective::Bits).expect("bits law present");
    let fps = eval(Objective::EncRate).expect("rate law present");
    let frames = segment.frame_count();
    Ok(SegmentMeasurement {
        config: config.clone(),
        segment_index: segment.index,
        frames,
        bitrate_kbps: bitrate,
        psnr_db: psnr,
        vmaf,
        ssim,
        fps,
        enc_time_s: frames as f64 / fps,
    })
}

#[derive(Clone, Debug)]
pub struct SyntheticEncoder {
    pub law: SyntheticLaw,
}

impl SyntheticEncoder {
    pub fn new(law: SyntheticLaw) -> Self {
        SyntheticEncoder { law }
    }
}

impl SegmentEncoder for SyntheticEncoder {
    fn encode(&self, config: &EncodingConfig, segment: &Segment) -> Result<SegmentMeasurement> {
        synth_encode(config, &self.law, segment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{Codec, CodecGrid, Filters};

    fn seg(index: usize) -> Segment {
        Segment {
            index,
            start: index * 150,
            end: index * 150 + 150,
            duration_s: 3.0,
        }
    }

    fn config(qp: i32, filters: Filters) -> EncodingConfig {
        EncodingConfig {
            codec: Codec::Synthetic,
            gop: "B6".into(),
            gop_type: None,
            qp,
            filters,
            preset: "synthetic".into(),
        }
    }

    #[test]
    fn reference_bits_law_at_qp28() {
        let m = synth_encode(&config(28, Filters::OFF), &SyntheticLaw::default(), &seg(0)).unwrap();
        let expected = (15.946f64 - 0.304 * 28.0 + 0.0024092 * 784.0).exp();
        assert!((m.bitrate_kbps - expected).abs() < 1e-9);
        assert!((m.bitrate_kbps / 11188.0 - 1.0).abs() < 0.005);
        assert_eq!(m.enc_time_s, 150.0 / m.fps);
    }

    #[test]
    fn deterministic() {
        let mut law = SyntheticLaw::default();
        law.noise_sigma = 0.01;
        law.seed = 7;
        let c = config(31, Filters::OFF);
        assert_eq!(synth_encode(&c, &law, &seg(2)).unwrap(), synth_encode(&c, &law, &seg(2)).unwrap());
        assert_ne!(synth_encode(&c, &law, &seg(2)).unwrap(), synth_encode(&c, &law, &seg(3)).unwrap());
    }

    #[test]
    fn bitrate_strictly_decreasing_over_grid() {
        for law in [SyntheticLaw::basketball_drive(), SyntheticLaw::cactus()] {
            for gop in law.gops() {
                for on in [false, true] {
                    let rates: Vec<f64> = (16..=45)
                        .map(|q| law.value(gop, on, Objective::Bits, q as f64).unwrap())
                        .collect();
                    assert!(rates.windows(2).all(|w| w[1] < w[0]), "{gop}");
                    let psnr: Vec<f64> = (16..=45)
                        .map(|q| law.value(gop, on, Objective::Psnr, q as f64).unwrap())
                        .collect();
                    assert!(psnr.windows(2).all(|w| w[1] <= w[0]), "{gop}");
                }
            }
        }
    }

    #[test]
    fn unknown_gop_is_an_error() {
        let mut c = config(28, Filters::OFF);
        c.gop = "B10".into();
        assert!(matches!(
            synth_encode(&c, &SyntheticLaw::default(), &seg(0)),
            Err(Error::UnknownGop { .. })
        ));
    }

    #[test]
    fn filter_offsets_apply_in_log_domain() {
        let law = SyntheticLaw::default();
        let off = synth_encode(&config(28, Filters::OFF), &law, &seg(0)).unwrap();
        let on = synth_encode(&config(28, Filters::deblock_only()), &law, &seg(0)).unwrap();
        assert!(((on.psnr_db / off.psnr_db).ln() - law.filter_offsets.psnr).abs() < 1e-12);
        assert!(((on.bitrate_kbps / off.bitrate_kbps).ln() - law.filter_offsets.bits).abs() < 1e-12);
    }

    #[test]
    fn synthetic_grid_matches_law() {
        let grid = CodecGrid::synthetic(&SyntheticLaw::cactus());
        assert_eq!(grid.gops, vec!["B2", "B3", "B4"]);
        assert_eq!(grid.enumerate().len(), 3 * 10 * 2);
    }
}
