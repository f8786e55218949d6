//! Encoding modes, bounds and soft-violation tolerances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Objective;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    MaxQuality,
    MinBitrate,
    MaxEncRate,
    MinEncTime,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::MaxQuality => "max_quality",
            Mode::MinBitrate => "min_bitrate",
            Mode::MaxEncRate => "max_enc_rate",
            Mode::MinEncTime => "min_enc_time",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "max_quality" => Ok(Mode::MaxQuality),
            "min_bitrate" => Ok(Mode::MinBitrate),
            "max_enc_rate" | "max_fps" => Ok(Mode::MaxEncRate),
            "min_enc_time" | "min_time" => Ok(Mode::MinEncTime),
            _ => Err(Error::InvalidConstraints(format!("unknown mode `{s}`"))),
        }
    }
}

/// Which score the quality bound and the max-quality objective refer to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityMetric {
    #[default]
    Psnr,
    Vmaf,
    Ssim,
}

impl QualityMetric {
    pub fn objective(self) -> Objective {
        match self {
            QualityMetric::Psnr => Objective::Psnr,
            QualityMetric::Vmaf => Objective::Vmaf,
            QualityMetric::Ssim => Objective::Ssim,
        }
    }
}

impl FromStr for QualityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psnr" | "psnr611" => Ok(QualityMetric::Psnr),
            "vmaf" => Ok(QualityMetric::Vmaf),
            "ssim" => Ok(QualityMetric::Ssim),
            _ => Err(Error::InvalidConstraints(format!("unknown quality metric `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bitrate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_quality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
}

impl Bounds {
    fn is_empty(&self) -> bool {
        self.max_bitrate.is_none() && self.min_quality.is_none() && self.min_fps.is_none() && self.max_time.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub bitrate_rel: f64,
    pub fps_rel: f64,
    pub quality_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            bitrate_rel: 0.10,
            fps_rel: 0.10,
            quality_rel: 0.05,
        }
    }
}

impl Tolerances {
    pub const ZERO: Tolerances = Tolerances {
        bitrate_rel: 0.0,
        fps_rel: 0.0,
        quality_rel: 0.0,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub mode: Mode,
    pub bounds: Bounds,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub quality_metric: QualityMetric,
}

impl ConstraintSet {
    pub fn new(mode: Mode, bounds: Bounds, quality_metric: QualityMetric, tolerances: Tolerances) -> Result<Self> {
        let cs = ConstraintSet {
            mode,
            bounds,
            tolerances,
            quality_metric,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Result<Self> {
        self.tolerances = tolerances;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConstraints(msg));
        if self.bounds.is_empty() {
            return invalid("at least one bound is required".into());
        }
        let t = &self.tolerances;
        for (name, v) in [("bitrate", t.bitrate_rel), ("fps", t.fps_rel), ("quality", t.quality_rel)] {
            if !(0.0..=0.5).contains(&v) {
                return invalid(format!("{name} tolerance {v} outside [0, 0.5]"));
            }
        }
        let b = &self.bounds;
        for (name, v) in [
            ("max_bitrate", b.max_bitrate),
            ("min_quality", b.min_quality),
            ("min_fps", b.min_fps),
            ("max_time", b.max_time),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return invalid(format!("{name} must be positive, got {v}"));
                }
            }
        }
        let speed = b.min_fps.is_some() || b.max_time.is_some();
        match self.mode {
            Mode::MaxQuality => {
                if b.min_quality.is_some() {
                    return invalid("max_quality optimizes quality; drop min_quality".into());
                }
                if b.max_bitrate.is_none() || !speed {
                    return invalid("max_quality requires max_bitrate and min_fps (or max_time)".into());
                }
            }
            Mode::MinBitrate => {
                if b.max_bitrate.is_some() {
                    return invalid("min_bitrate optimizes bitrate; drop max_bitrate".into());
                }
                if b.min_quality.is_none() || !speed {
                    return invalid("min_bitrate requires min_quality and min_fps (or max_time)".into());
                }
            }
            Mode::MaxEncRate | Mode::MinEncTime => {
                if speed {
                    return invalid(format!("{} optimizes speed; drop min_fps/max_time", self.mode));
                }
                if b.min_quality.is_none() || b.max_bitrate.is_none() {
                    return invalid(format!("{} requires min_quality and max_bitrate", self.mode));
                }
            }
        }
        Ok(())
    }
}

/// Validated constraint set with default tolerances and a PSNR quality axis.
pub fn make_mode(mode: &str, bounds: Bounds) -> Result<ConstraintSet> {
    ConstraintSet::new(mode.parse()?, bounds, QualityMetric::Psnr, Tolerances::default())
}

/// Objective values at one operating point; absent values are not checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Predicted {
    pub quality: Option<f64>,
    pub bitrate: Option<f64>,
    pub fps: Option<f64>,
    pub time: Option<f64>,
}

impl Predicted {
    /// Value of the mode's objective oriented so that larger is better.
    pub fn mode_score(&self, mode: Mode) -> f64 {
        let v = match mode {
            Mode::MaxQuality => self.quality,
            Mode::MinBitrate => self.bitrate.map(|b| -b),
            Mode::MaxEncRate | Mode::MinEncTime => match (self.fps, self.time) {
                (_, Some(t)) if mode == Mode::MinEncTime => Some(-t),
                (Some(f), _) => Some(f),
                (None, Some(t)) => Some(-t),
                (None, None) => None,
            },
        };
        v.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    MaxBitrate,
    MinQuality,
    MinFps,
    MaxTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub bound: BoundKind,
    /// Relative overshoot past the bound, before tolerance.
    pub overshoot: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub satisfied: bool,
    pub violations: Vec<Violation>,
}

impl CheckOutcome {
    pub fn total_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.overshoot).sum()
    }
}

/// Relative overshoot of every bound, tolerance not applied; zero when met.
pub fn overshoots(predicted: &Predicted, bounds: &Bounds) -> Vec<(BoundKind, f64)> {
    let mut out = Vec::new();
    if let (Some(max), Some(b)) = (bounds.max_bitrate, predicted.bitrate) {
        out.push((BoundKind::MaxBitrate, ((b - max) / max).max(0.0)));
    }
    if let (Some(min), Some(q)) = (bounds.min_quality, predicted.quality) {
        out.push((BoundKind::MinQuality, ((min - q) / min).max(0.0)));
    }
    if let (Some(min), Some(f)) = (bounds.min_fps, predicted.fps) {
        out.push((BoundKind::MinFps, ((min - f) / min).max(0.0)));
    }
    if let (Some(max), Some(t)) = (bounds.max_time, predicted.time) {
        out.push((BoundKind::MaxTime, ((t - max) / max).max(0.0)));
    }
    out
}

fn check_with(predicted: &Predicted, cs: &ConstraintSet, tol: &Tolerances) -> CheckOutcome {
    let violations: Vec<Violation> = overshoots(predicted, &cs.bounds)
        .into_iter()
        .filter(|&(kind, over)| {
            let allowed = match kind {
                BoundKind::MaxBitrate => tol.bitrate_rel,
                BoundKind::MinQuality => tol.quality_rel,
                BoundKind::MinFps | BoundKind::MaxTime => tol.fps_rel,
            };
            over > allowed
        })
        .map(|(bound, overshoot)| Violation { bound, overshoot })
        .collect();
    CheckOutcome {
        satisfied: violations.is_empty(),
        violations,
    }
}

/// Checks each bound against its tolerance band.
pub fn check_constraints(predicted: &Predicted, cs: &ConstraintSet) -> CheckOutcome {
    check_with(predicted, cs, &cs.tolerances)
}

// round-off slack so a prediction sitting exactly on its bound still passes
const HARD_SLACK: f64 = 1e-9;

/// Bounds checked with no tolerance beyond floating-point slack.
pub fn check_hard(predicted: &Predicted, cs: &ConstraintSet) -> CheckOutcome {
    let tol = Tolerances {
        bitrate_rel: HARD_SLACK,
        fps_rel: HARD_SLACK,
        quality_rel: HARD_SLACK,
    };
    check_with(predicted, cs, &tol)
}
