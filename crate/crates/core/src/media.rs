//! Raw 4:2:0 video, fixed-duration segmentation and the quality metrics the
//! optimizer consumes (plane PSNR, PSNR611, SSIM, and VMAF logs produced by an
//! external scorer).

use std::io::Read;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PSNR reported for identical planes instead of infinity.
pub const PSNR_CAP_DB: f64 = 100.0;

const PEAK: f64 = 255.0;
const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

/// One planar 8-bit 4:2:0 frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub y: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, y: u8, u: u8, v: u8) -> Self {
        let chroma = (width / 2) * (height / 2);
        Frame {
            y: vec![y; width * height],
            u: vec![u; chroma],
            v: vec![v; chroma],
        }
    }

    fn planes(&self) -> [&[u8]; 3] {
        [&self.y, &self.u, &self.v]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawVideo {
    width: usize,
    height: usize,
    fps: u32,
    frames: Vec<Frame>,
}

impl RawVideo {
    pub fn new(width: usize, height: usize, fps: u32, frames: Vec<Frame>) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(Error::InvalidVideo(format!(
                "{width}x{height}: dimensions must be even and non-zero"
            )));
        }
        if fps == 0 {
            return Err(Error::InvalidVideo("fps must be positive".into()));
        }
        let luma = width * height;
        let chroma = (width / 2) * (height / 2);
        for (i, f) in frames.iter().enumerate() {
            if f.y.len() != luma || f.u.len() != chroma || f.v.len() != chroma {
                return Err(Error::InvalidVideo(format!(
                    "frame {i} has planes {}/{}/{}, expected {luma}/{chroma}/{chroma}",
                    f.y.len(),
                    f.u.len(),
                    f.v.len()
                )));
            }
        }
        Ok(RawVideo {
            width,
            height,
            fps,
            frames,
        })
    }

    /// Reads headerless planar YUV 4:2:0. A trailing partial frame is an error.
    pub fn read_yuv420<R: Read>(mut reader: R, width: usize, height: usize, fps: u32) -> Result<Self> {
        let mut bytes = Vec::new();
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<reader>", e))?;
        Self::from_yuv420_bytes(&bytes, width, height, fps)
    }

    pub fn open_yuv420(path: &Path, width: usize, height: usize, fps: u32) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_yuv420_bytes(&bytes, width, height, fps)
    }

    pub fn from_yuv420_bytes(bytes: &[u8], width: usize, height: usize, fps: u32) -> Result<Self> {
        let luma = width * height;
        let chroma = (width / 2) * (height / 2);
        let frame_size = luma + 2 * chroma;
        if frame_size == 0 || bytes.len() % frame_size != 0 {
            return Err(Error::InvalidVideo(format!(
                "{} bytes is not a whole number of {width}x{height} 4:2:0 frames",
                bytes.len()
            )));
        }
        let frames = bytes
            .chunks_exact(frame_size)
            .map(|c| Frame {
                y: c[..luma].to_vec(),
                u: c[luma..luma + chroma].to_vec(),
                v: c[luma + chroma..].to_vec(),
            })
            .collect();
        Self::new(width, height, fps, frames)
    }

    pub fn write_yuv420(&self, range: Range<usize>, out: &mut impl std::io::Write) -> std::io::Result<()> {
        for f in &self.frames[range] {
            out.write_all(&f.y)?;
            out.write_all(&f.u)?;
            out.write_all(&f.v)?;
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fps(&self) -> u32 {
        self.fps
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// A copy holding only the frames in `range`.
    pub fn slice(&self, range: Range<usize>) -> RawVideo {
        RawVideo {
            width: self.width,
            height: self.height,
            fps: self.fps,
            frames: self.frames[range].to_vec(),
        }
    }

    fn check_matches(&self, other: &RawVideo) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Mismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if self.frames.len() != other.frames.len() {
            return Err(Error::Mismatch(format!(
                "{} vs {} frames",
                self.frames.len(),
                other.frames.len()
            )));
        }
        if self.frames.is_empty() {
            return Err(Error::NoFrames);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub duration_s: f64,
}

impl Segment {
    pub fn frame_range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn frame_count(&self) -> usize {
        self.end - self.start
    }
}

/// Splits `frame_count` frames at `fps` into segments of `floor(fps * seconds)`
/// frames; the remainder forms one shorter final segment.
pub fn split_frames(frame_count: usize, fps: f64, segment_seconds: f64) -> Result<Vec<Segment>> {
    if frame_count == 0 {
        return Err(Error::NoFrames);
    }
    if !(fps > 0.0) || fps.fract() != 0.0 {
        return Err(Error::FractionalFps(fps));
    }
    if !(segment_seconds > 0.0) || !segment_seconds.is_finite() {
        return Err(Error::InvalidVideo(format!(
            "segment length must be positive, got {segment_seconds}"
        )));
    }
    let per_segment = (fps * segment_seconds).floor() as usize;
    if per_segment == 0 {
        return Err(Error::InvalidVideo(format!(
            "segment of {segment_seconds} s at {fps} fps holds no frames"
        )));
    }
    let mut segments = Vec::with_capacity(frame_count.div_ceil(per_segment));
    let mut start = 0;
    while start < frame_count {
        let end = (start + per_segment).min(frame_count);
        segments.push(Segment {
            index: segments.len(),
            start,
            end,
            duration_s: (end - start) as f64 / fps,
        });
        start = end;
    }
    Ok(segments)
}

pub fn split_segments(video: &RawVideo, segment_seconds: f64) -> Result<Vec<Segment>> {
    split_frames(video.frame_count(), video.fps() as f64, segment_seconds)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    pub psnr611: f64,
    pub vmaf: Option<f64>,
    pub ssim: Option<f64>,
}

/// Global PSNR weighting the luma plane six times each chroma plane.
pub fn psnr611(y: f64, u: f64, v: f64) -> f64 {
    (6.0 * y + u + v) / 8.0
}

fn mse_to_psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP_DB)
}

fn sse(a: &[u8], b: &[u8]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum()
}

/// PSNR of a single plane pair.
pub fn plane_psnr(reference: &[u8], distorted: &[u8]) -> Result<f64> {
    if reference.len() != distorted.len() {
        return Err(Error::Mismatch(format!(
            "plane sizes {} vs {}",
            reference.len(),
            distorted.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput("plane"));
    }
    Ok(mse_to_psnr(sse(reference, distorted) as f64 / reference.len() as f64))
}

/// Per-plane PSNR over the whole sequence. MSE is pooled across frames before
/// conversion to dB; `vmaf` and `ssim` are left unset.
pub fn psnr_global(reference: &RawVideo, distorted: &RawVideo) -> Result<QualityScores> {
    reference.check_matches(distorted)?;
    // integer SSE sums are exact, so parallel evaluation is order-independent
    let per_frame: Vec<[u64; 3]> = reference
        .frames
        .par_iter()
        .zip(distorted.frames.par_iter())
        .map(|(r, d)| {
            let (rp, dp) = (r.planes(), d.planes());
            [sse(rp[0], dp[0]), sse(rp[1], dp[1]), sse(rp[2], dp[2])]
        })
        .collect();
    let mut totals = [0u64; 3];
    for f in &per_frame {
        for p in 0..3 {
            totals[p] += f[p];
        }
    }
    let n = reference.frames.len() as f64;
    let luma = (reference.width * reference.height) as f64;
    let chroma = ((reference.width / 2) * (reference.height / 2)) as f64;
    let y = mse_to_psnr(totals[0] as f64 / (luma * n));
    let u = mse_to_psnr(totals[1] as f64 / (chroma * n));
    let v = mse_to_psnr(totals[2] as f64 / (chroma * n));
    Ok(QualityScores {
        psnr_y: y,
        psnr_u: u,
        psnr_v: v,
        psnr611: psnr611(y, u, v),
        vmaf: None,
        ssim: None,
    })
}

fn window_ssim(a: &[u8], b: &[u8], stride: usize, x0: usize, y0: usize, w: usize, h: usize) -> f64 {
    let n = (w * h) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y0 + h {
        let row = y * stride;
        for x in x0..x0 + w {
            let pa = a[row + x] as f64;
            let pb = b[row + x] as f64;
            sa += pa;
            sb += pb;
            saa += pa * pa;
            sbb += pb * pb;
            sab += pa * pb;
        }
    }
    let ma = sa / n;
    let mb = sb / n;
    let va = (saa / n - ma * ma).max(0.0);
    let vb = (sbb / n - mb * mb).max(0.0);
    let cov = sab / n - ma * mb;
    ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
}

/// Mean SSIM of one luma plane over non-overlapping 8x8 windows. Planes
/// narrower or shorter than 8 samples use a single window spanning that axis.
pub fn plane_ssim(reference: &[u8], distorted: &[u8], width: usize, height: usize) -> Result<f64> {
    if reference.len() != width * height || distorted.len() != width * height {
        return Err(Error::Mismatch("plane size does not match dimensions".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::EmptyInput("plane"));
    }
    let ww = SSIM_WINDOW.min(width);
    let wh = SSIM_WINDOW.min(height);
    let mut total = 0.0;
    let mut count = 0usize;
    for by in 0..height / wh {
        for bx in 0..width / ww {
            total += window_ssim(reference, distorted, width, bx * ww, by * wh, ww, wh);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean luma SSIM over all frames.
pub fn ssim_mean(reference: &RawVideo, distorted: &RawVideo) -> Result<f64> {
    reference.check_matches(distorted)?;
    let (w, h) = (reference.width, reference.height);
    let per_frame: Vec<f64> = reference
        .frames
        .par_iter()
        .zip(distorted.frames.par_iter())
        .map(|(r, d)| plane_ssim(&r.y, &d.y, w, h))
        .collect::<Result<_>>()?;
    // fixed summation order keeps the result identical to a sequential pass
    let sum: f64 = per_frame.iter().sum();
    Ok(sum / per_frame.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VmafScores {
    pub per_frame: Vec<f64>,
    pub mean: f64,
}

/// Parses a VMAF score log. Two layouts are accepted:
///
/// * libvmaf JSON (`frames[].metrics.vmaf`, `pooled_metrics.vmaf.mean`);
/// * key/value text, one record per line: `frame=3 vmaf=91.2` for per-frame
///   scores and `vmaf_mean=96.26` (or `pooled vmaf=96.26`) for the pooled mean.
///
/// A pooled mean, when present, wins over the per-frame average.
pub fn parse_vmaf_log(text: &str) -> Result<VmafScores> {
    let trimmed = text.trim_start();
    let (per_frame, pooled) = if trimmed.starts_with('{') {
        parse_vmaf_json(trimmed)?
    } else {
        parse_vmaf_kv(text)
    };
    let per_frame: Vec<f64> = per_frame.into_iter().map(clamp_vmaf).collect();
    let mean = match pooled {
        Some(m) => clamp_vmaf(m),
        None if !per_frame.is_empty() => per_frame.iter().sum::<f64>() / per_frame.len() as f64,
        None => return Err(Error::NotVmafLog),
    };
    Ok(VmafScores { per_frame, mean })
}

fn clamp_vmaf(v: f64) -> f64 {
    v.clamp(0.0, 100.0)
}

fn parse_vmaf_json(text: &str) -> Result<(Vec<f64>, Option<f64>)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|_| Error::NotVmafLog)?;
    let per_frame = value
        .get("frames")
        .and_then(|f| f.as_array())
        .map(|frames| {
            frames
                .iter()
                .filter_map(|f| f.pointer("/metrics/vmaf").and_then(|v| v.as_f64()))
                .collect()
        })
        .unwrap_or_default();
    let pooled = value
        .pointer("/pooled_metrics/vmaf/mean")
        .or_else(|| value.pointer("/aggregate/VMAF_score"))
        .or_else(|| value.get("vmaf_mean"))
        .and_then(|v| v.as_f64());
    Ok((per_frame, pooled))
}

fn parse_vmaf_kv(text: &str) -> (Vec<f64>, Option<f64>) {
    let mut per_frame = Vec::new();
    let mut pooled = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let is_pooled_line = line.split_whitespace().next() == Some("pooled");
        for token in line.split_whitespace() {
            let Some((key, value)) = token.split_once('=') else {
                continue;
            };
            let Ok(value) = value.trim_matches(',').parse::<f64>() else {
                continue;
            };
            match key {
                "vmaf_mean" | "pooled_vmaf" => pooled = Some(value),
                "vmaf" if is_pooled_line => pooled = Some(value),
                "vmaf" => per_frame.push(value),
                _ => {}
            }
        }
    }
    (per_frame, pooled)
}
