//! Codec configuration grids, per-segment measurements and the encoders that
//! produce them (external command templates or the deterministic synthetic
//! law).

mod external;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::Segment;
use crate::models::Objective;

pub use external::{CommandTemplates, ExternalEncoder};
pub use synthetic::{synth_encode, LawCoefficients, ObjectiveOffsets, SyntheticEncoder, SyntheticLaw};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Codec {
    X265,
    Vp9,
    SvtAv1,
    Synthetic,
}

impl Codec {
    pub const ALL: [Codec; 4] = [Codec::X265, Codec::Vp9, Codec::SvtAv1, Codec::Synthetic];

    pub fn as_str(self) -> &'static str {
        match self {
            Codec::X265 => "x265",
            Codec::Vp9 => "vp9",
            Codec::SvtAv1 => "svt-av1",
            Codec::Synthetic => "synthetic",
        }
    }

    /// Every GOP label the codec understands, simplest structure first.
    /// The synthetic codec accepts whatever its law defines.
    pub fn gop_labels(self) -> &'static [&'static str] {
        match self {
            Codec::X265 => &["AI", "ZL", "B2", "B3", "B4", "B6", "B8", "B10"],
            Codec::Vp9 => &["ALT0", "ALT1", "ALT2", "ALT4", "ALT6"],
            Codec::SvtAv1 => &["HL3ALT0", "HL3ALT2", "HL3ALT8", "HL4ALT0", "HL4ALT2", "HL4ALT8"],
            Codec::Synthetic => &[],
        }
    }

    /// Position of `gop` in [`Codec::gop_labels`]; lower means fewer reference layers.
    pub fn gop_complexity(self, gop: &str) -> usize {
        self.gop_labels()
            .iter()
            .position(|g| *g == gop)
            .unwrap_or_else(|| gop_digits(gop))
    }

    /// Newton start point: the encoder's customary default QP.
    pub fn default_start_qp(self) -> f64 {
        match self {
            Codec::SvtAv1 => 30.0,
            _ => 27.0,
        }
    }

    pub fn qp_limits(self) -> (i32, i32) {
        match self {
            Codec::X265 | Codec::Synthetic => (16, 45),
            Codec::Vp9 | Codec::SvtAv1 => (16, 52),
        }
    }
}

fn gop_digits(gop: &str) -> usize {
    gop.chars()
        .filter(|c| c.is_ascii_digit())
        .collect::<String>()
        .parse()
        .unwrap_or(usize::MAX / 2)
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Codec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x265" | "hevc" => Ok(Codec::X265),
            "vp9" | "libvpx" | "libvpx-vp9" => Ok(Codec::Vp9),
            "svt-av1" | "svtav1" | "av1" => Ok(Codec::SvtAv1),
            "synthetic" => Ok(Codec::Synthetic),
            _ => Err(Error::UnknownCodec(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GopType {
    Open,
    Closed,
}

impl fmt::Display for GopType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GopType::Open => "open",
            GopType::Closed => "closed",
        })
    }
}

/// In-loop filter switches. Codecs ignore flags they do not have
/// (x265: deblock + SAO, vp9: deblock, svt-av1: deblock + restoration).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Filters {
    pub deblock: bool,
    pub sao: bool,
    pub restoration: bool,
}

impl Filters {
    pub const OFF: Filters = Filters {
        deblock: false,
        sao: false,
        restoration: false,
    };

    pub fn deblock_only() -> Self {
        Filters {
            deblock: true,
            ..Filters::OFF
        }
    }

    pub fn any(&self) -> bool {
        self.deblock || self.sao || self.restoration
    }

    /// Options a codec's grid sweeps over.
    pub fn options_for(codec: Codec) -> Vec<Filters> {
        let on = |sao, restoration| Filters {
            deblock: true,
            sao,
            restoration,
        };
        match codec {
            Codec::X265 | Codec::Synthetic => vec![on(true, false), Filters::OFF],
            Codec::Vp9 => vec![Filters::deblock_only(), Filters::OFF],
            Codec::SvtAv1 => vec![
                on(false, true),
                on(false, false),
                Filters {
                    restoration: true,
                    ..Filters::OFF
                },
                Filters::OFF,
            ],
        }
    }
}

impl fmt::Display for Filters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.deblock {
            parts.push("dbf");
        }
        if self.sao {
            parts.push("sao");
        }
        if self.restoration {
            parts.push("lr");
        }
        if parts.is_empty() {
            f.write_str("off")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for Filters {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Filters::OFF;
        if s == "off" || s.is_empty() {
            return Ok(out);
        }
        for part in s.split('+') {
            match part {
                "dbf" | "deblock" => out.deblock = true,
                "sao" => out.sao = true,
                "lr" | "restoration" => out.restoration = true,
                other => return Err(Error::parse("filters", format!("unknown filter flag `{other}`"))),
            }
        }
        Ok(out)
    }
}

impl From<Filters> for String {
    fn from(f: Filters) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for Filters {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One point of a codec's configuration grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub codec: Codec,
    pub gop: String,
    pub gop_type: Option<GopType>,
    pub qp: i32,
    pub filters: Filters,
    pub preset: String,
}

impl EncodingConfig {
    pub fn with_qp(&self, qp: i32) -> EncodingConfig {
        EncodingConfig { qp, ..self.clone() }
    }
}

impl fmt::Display for EncodingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} qp={} fil={}", self.codec, self.gop, self.qp, self.filters)?;
        if let Some(t) = self.gop_type {
            write!(f, " {t}")?;
        }
        write!(f, " preset={}", self.preset)
    }
}

/// The swept configuration grid of one codec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecGrid {
    pub codec: Codec,
    pub gops: Vec<String>,
    /// QPs visited by the exhaustive sweep.
    pub sweep_qps: Vec<i32>,
    /// Admissible QP interval for solved (non-sweep) encodes.
    pub qp_min: i32,
    pub qp_max: i32,
    pub filters: Vec<Filters>,
    pub gop_types: Vec<Option<GopType>>,
    pub presets: Vec<String>,
    /// GOP used by the constant-QP baseline.
    pub baseline_gop: String,
}

fn stepped(from: i32, to: i32, step: usize) -> Vec<i32> {
    (from..=to).step_by(step).collect()
}

fn labels(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl CodecGrid {
    /// The default grid: x265 200 configurations, vp9 100, svt-av1 240.
    pub fn default_for(codec: Codec) -> Result<CodecGrid> {
        let (qp_min, qp_max) = codec.qp_limits();
        Ok(match codec {
            Codec::X265 => CodecGrid {
                codec,
                gops: labels(&["B2", "B3", "B4", "B6", "ZL"]),
                sweep_qps: stepped(16, 43, 3),
                qp_min,
                qp_max,
                filters: Filters::options_for(codec),
                gop_types: vec![Some(GopType::Open), Some(GopType::Closed)],
                presets: labels(&["ultrafast"]),
                baseline_gop: "B3".into(),
            },
            Codec::Vp9 => CodecGrid {
                codec,
                gops: labels(Codec::Vp9.gop_labels()),
                sweep_qps: stepped(16, 52, 4),
                qp_min,
                qp_max,
                filters: Filters::options_for(codec),
                gop_types: vec![None],
                presets: labels(&["rt"]),
                baseline_gop: "ALT0".into(),
            },
            Codec::SvtAv1 => CodecGrid {
                codec,
                gops: labels(Codec::SvtAv1.gop_labels()),
                sweep_qps: stepped(16, 52, 4),
                qp_min,
                qp_max,
                filters: Filters::options_for(codec),
                gop_types: vec![None],
                presets: labels(&["7"]),
                baseline_gop: "HL4ALT8".into(),
            },
            Codec::Synthetic => {
                return Err(Error::InvalidConstraints(
                    "the synthetic grid is derived from its law; use CodecGrid::synthetic".into(),
                ))
            }
        })
    }

    /// Grid for the synthetic encoder: the law's GOPs on the x265 QP ladder.
    pub fn synthetic(law: &SyntheticLaw) -> CodecGrid {
        let (qp_min, qp_max) = Codec::Synthetic.qp_limits();
        let gops: Vec<String> = law.gops().map(str::to_string).collect();
        CodecGrid {
            codec: Codec::Synthetic,
            baseline_gop: gops.first().cloned().unwrap_or_default(),
            gops,
            sweep_qps: stepped(16, 43, 3),
            qp_min,
            qp_max,
            filters: Filters::options_for(Codec::Synthetic),
            gop_types: vec![None],
            presets: labels(&["synthetic"]),
        }
    }

    /// The extended x265 grids built from preset profile groups: group A
    /// extends B4 into B2/B6 over the faster presets, group B extends B8 into
    /// B6/B10 over the slow presets. Both sweep SAO and deblocking separately.
    pub fn x265_profile_group(group_b: bool) -> CodecGrid {
        let (gops, presets): (&[&str], &[&str]) = if group_b {
            (&["AI", "B6", "B8", "B10", "ZL"], &["slower", "veryslow", "placebo"])
        } else {
            (
                &["AI", "B2", "B4", "B6", "ZL"],
                &["ultrafast", "superfast", "veryfast", "faster", "fast", "medium", "slow"],
            )
        };
        let mut filters = Vec::new();
        for deblock in [true, false] {
            for sao in [true, false] {
                filters.push(Filters {
                    deblock,
                    sao,
                    restoration: false,
                });
            }
        }
        let (qp_min, qp_max) = Codec::X265.qp_limits();
        CodecGrid {
            codec: Codec::X265,
            gops: labels(gops),
            sweep_qps: stepped(22, 42, 5),
            qp_min,
            qp_max,
            filters,
            gop_types: vec![Some(GopType::Open), Some(GopType::Closed)],
            presets: labels(presets),
            baseline_gop: if group_b { "B8".into() } else { "B4".into() },
        }
    }

    /// Cartesian product in GOP, then ascending QP, then flag order.
    pub fn enumerate(&self) -> Vec<EncodingConfig> {
        let mut qps = self.sweep_qps.clone();
        qps.sort_unstable();
        let mut out = Vec::with_capacity(self.len());
        for gop in &self.gops {
            for &qp in &qps {
                for &filters in &self.filters {
                    for &gop_type in &self.gop_types {
                        for preset in &self.presets {
                            out.push(EncodingConfig {
                                codec: self.codec,
                                gop: gop.clone(),
                                gop_type,
                                qp,
                                filters,
                                preset: preset.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.gops.len() * self.sweep_qps.len() * self.filters.len() * self.gop_types.len() * self.presets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clamp_qp(&self, qp: i32) -> i32 {
        qp.clamp(self.qp_min, self.qp_max)
    }

    pub fn validate(&self, config: &EncodingConfig) -> Result<()> {
        if config.qp < self.qp_min || config.qp > self.qp_max {
            return Err(Error::QpOutOfRange {
                codec: self.codec.to_string(),
                qp: config.qp,
                min: self.qp_min,
                max: self.qp_max,
            });
        }
        if !self.gops.iter().any(|g| *g == config.gop) {
            return Err(Error::UnknownGop {
                codec: self.codec.to_string(),
                gop: config.gop.clone(),
            });
        }
        Ok(())
    }
}

/// Full grid for a codec identifier.
pub fn enumerate_configs(codec: &str) -> Result<Vec<EncodingConfig>> {
    let codec: Codec = codec.parse()?;
    match codec {
        Codec::Synthetic => Ok(CodecGrid::synthetic(&SyntheticLaw::default()).enumerate()),
        _ => Ok(CodecGrid::default_for(codec)?.enumerate()),
    }
}

/// Measured objectives of one configuration on one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeasurement {
    pub config: EncodingConfig,
    pub segment_index: usize,
    pub frames: usize,
    pub bitrate_kbps: f64,
    pub psnr_db: f64,
    pub vmaf: Option<f64>,
    pub ssim: Option<f64>,
    /// Encoding rate in frames per second.
    pub fps: f64,
    pub enc_time_s: f64,
}

impl SegmentMeasurement {
    pub fn objective(&self, objective: Objective) -> Option<f64> {
        match objective {
            Objective::Psnr => Some(self.psnr_db),
            Objective::Vmaf => self.vmaf,
            Objective::Ssim => self.ssim,
            Objective::Bits => Some(self.bitrate_kbps),
            Objective::EncRate => Some(self.fps),
        }
    }
}

/// Anything that can turn a configuration and a segment into a measurement.
pub trait SegmentEncoder: Sync {
    fn encode(&self, config: &EncodingConfig, segment: &Segment) -> Result<SegmentMeasurement>;
}

impl<T: SegmentEncoder + ?Sized> SegmentEncoder for &T {
    fn encode(&self, config: &EncodingConfig, segment: &Segment) -> Result<SegmentMeasurement> {
        (**self).encode(config, segment)
    }
}

/// Routes synthetic configurations to the law and everything else to the
/// external command driver.
pub struct EncoderRouter {
    pub synthetic: Option<SyntheticEncoder>,
    pub external: Option<ExternalEncoder>,
}

impl SegmentEncoder for EncoderRouter {
    fn encode(&self, config: &EncodingConfig, segment: &Segment) -> Result<SegmentMeasurement> {
        match (config.codec, &self.synthetic, &self.external) {
            (Codec::Synthetic, Some(s), _) => s.encode(config, segment),
            (Codec::Synthetic, None, _) => Err(Error::MissingTemplate("synthetic (no law loaded)".into())),
            (_, _, Some(e)) => e.encode(config, segment),
            (codec, _, None) => Err(Error::MissingTemplate(codec.to_string())),
        }
    }
}
