//! Line-delimited JSON files with a versioned header line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityLabel;
use crate::constraints::ConstraintSet;
use crate::encoder::{Codec, EncodingConfig, Filters, GopType, SegmentMeasurement};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const SWEEP: &str = "sweep";
pub const DECISIONS: &str = "decisions";
pub const MODELS: &str = "models";
pub const RD_POINTS: &str = "rd-points";
pub const MOTION_VECTORS: &str = "motion-vectors";
pub const PU_COUNTS: &str = "pu-counts";
pub const SCHEDULE: &str = "constraint-schedule";
pub const FRONT: &str = "pareto-front";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
}

impl Header {
    pub fn new(kind: &str) -> Self {
        Header {
            format: kind.to_string(),
            version: FORMAT_VERSION,
        }
    }
}

fn header_line(kind: &str) -> String {
    serde_json::to_string(&Header::new(kind)).expect("header serializes")
}

fn check_header(path: &Path, line: &str, kind: &str) -> Result<bool> {
    let Ok(h) = serde_json::from_str::<Header>(line) else {
        return Ok(false);
    };
    if h.format != kind {
        return Err(Error::parse(
            format!("{}:1", path.display()),
            format!("expected a `{kind}` file, found `{}`", h.format),
        ));
    }
    if h.version > FORMAT_VERSION {
        return Err(Error::parse(
            format!("{}:1", path.display()),
            format!("format version {} is newer than {FORMAT_VERSION}", h.version),
        ));
    }
    Ok(true)
}

pub fn write_records<T: Serialize>(path: &Path, kind: &str, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header_line(kind)).map_err(io)?;
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads records of `kind`. The header is optional so hand-written inputs
/// load too, but a header naming another kind is rejected.
pub fn read_records<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 && check_header(path, trimmed, kind)? {
            continue;
        }
        let item = serde_json::from_str(trimmed)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

/// Appends records one at a time, flushing after each.
pub struct RecordWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl RecordWriter {
    /// Opens for append, writing the header into a new or empty file and
    /// validating it otherwise.
    pub fn append(path: &Path, kind: &str) -> Result<Self> {
        let existing = std::fs::read_to_string(path).ok().unwrap_or_default();
        let first = existing.lines().find(|l| !l.trim().is_empty());
        if let Some(first) = first {
            if !check_header(path, first.trim(), kind)? {
                return Err(Error::parse(format!("{}:1", path.display()), "missing header line"));
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut w = RecordWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        if first.is_none() {
            w.write_line(&header_line(kind))?;
        } else if !existing.ends_with('\n') {
            // a crash mid-line leaves a partial record; start a fresh line
            w.write_line("")?;
        }
        Ok(w)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let path = self.path.clone();
        writeln!(self.out, "{line}").map_err(|e| Error::io(&path, e))?;
        self.out.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn push<T: Serialize>(&mut self, item: &T) -> Result<()> {
        let line = serde_json::to_string(item).map_err(|e| Error::parse(self.path.display().to_string(), e.to_string()))?;
        self.write_line(&line)
    }
}

/// One sweep row: a measurement, or the error that replaced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub segment_id: usize,
    pub codec: Codec,
    pub gop: String,
    pub gop_type: Option<GopType>,
    pub qp: i32,
    pub filters: Filters,
    pub preset: String,
    pub frames: usize,
    pub bitrate_kbps: Option<f64>,
    pub psnr_db: Option<f64>,
    pub vmaf: Option<f64>,
    #[serde(default)]
    pub ssim: Option<f64>,
    pub fps: Option<f64>,
    pub enc_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn from_measurement(m: &SegmentMeasurement) -> Self {
        let c = &m.config;
        SweepRecord {
            segment_id: m.segment_index,
            codec: c.codec,
            gop: c.gop.clone(),
            gop_type: c.gop_type,
            qp: c.qp,
            filters: c.filters,
            preset: c.preset.clone(),
            frames: m.frames,
            bitrate_kbps: Some(m.bitrate_kbps),
            psnr_db: Some(m.psnr_db),
            vmaf: m.vmaf,
            ssim: m.ssim,
            fps: Some(m.fps),
            enc_time_s: Some(m.enc_time_s),
            error: None,
        }
    }

    pub fn failed(config: &EncodingConfig, segment_id: usize, frames: usize, error: &Error) -> Self {
        SweepRecord {
            segment_id,
            codec: config.codec,
            gop: config.gop.clone(),
            gop_type: config.gop_type,
            qp: config.qp,
            filters: config.filters,
            preset: config.preset.clone(),
            frames,
            bitrate_kbps: None,
            psnr_db: None,
            vmaf: None,
            ssim: None,
            fps: None,
            enc_time_s: None,
            error: Some(error.to_string()),
        }
    }

    pub fn config(&self) -> EncodingConfig {
        EncodingConfig {
            codec: self.codec,
            gop: self.gop.clone(),
            gop_type: self.gop_type,
            qp: self.qp,
            filters: self.filters,
            preset: self.preset.clone(),
        }
    }

    pub fn measurement(&self) -> Option<SegmentMeasurement> {
        if self.error.is_some() {
            return None;
        }
        Some(SegmentMeasurement {
            config: self.config(),
            segment_index: self.segment_id,
            frames: self.frames,
            bitrate_kbps: self.bitrate_kbps?,
            psnr_db: self.psnr_db?,
            vmaf: self.vmaf,
            ssim: self.ssim,
            fps: self.fps?,
            enc_time_s: self.enc_time_s?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPointRecord {
    pub codec: String,
    #[serde(default)]
    pub qp: Option<i32>,
    pub bitrate_kbps: f64,
    pub psnr611: Option<f64>,
    #[serde(default)]
    pub vmaf: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionVectorRecord {
    pub frame: usize,
    pub block_x: i64,
    pub block_y: i64,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuCountRecord {
    pub frame: usize,
    pub pu_count: f64,
}

/// A labelled frame range and the constraints its policy assigns; `None`
/// when the policy has no entry for the label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: ActivityLabel,
    pub constraints: Option<ConstraintSet>,
}

impl ScheduleEntry {
    pub fn frames(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn overlap(&self, start: usize, end: usize) -> usize {
        self.end_frame.min(end).saturating_sub(self.start_frame.max(start))
    }
}
