use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Codec, EncodingConfig, SegmentEncoder, SegmentMeasurement};
use crate::error::{Error, Result};
use crate::media::{self, RawVideo, Segment};

/// Shell command templates for one codec.
///
/// `encode` sees `{input}`, `{output}`, `{qp}`, `{gop}`, `{keyint}`, `{width}`,
/// `{height}`, `{fps}`, `{threads}`, plus `{gop_args}`, `{filter_args}`,
/// `{gop_type}`, `{preset}` and `{frames}`. `decode` turns `{input}` (the
/// bitstream) into raw 4:2:0 `{output}`. The optional `vmaf` command scores
/// `{distorted}` against `{reference}` and writes `{log}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandTemplates {
    pub encode: String,
    pub decode: String,
    #[serde(default)]
    pub vmaf: Option<String>,
    #[serde(default)]
    pub keyint: Option<u32>,
    #[serde(default = "default_threads")]
    pub threads: u32,
    /// Extra arguments per GOP label, substituted for `{gop_args}`.
    #[serde(default)]
    pub gop_args: BTreeMap<String, String>,
    /// Extra arguments per filter label (`dbf+sao`, `off`, ...), substituted for `{filter_args}`.
    #[serde(default)]
    pub filter_args: BTreeMap<String, String>,
}

fn default_threads() -> u32 {
    1
}

fn substitute(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn run_shell(command: &str) -> Result<()> {
    let output = Command::new("sh")
        .arg("-c")
        .arg(command)
        .output()
        .map_err(|e| Error::io("sh", e))?;
    if !output.status.success() {
        let mut diagnostics = String::from_utf8_lossy(&output.stderr).into_owned();
        if diagnostics.trim().is_empty() {
            diagnostics = String::from_utf8_lossy(&output.stdout).into_owned();
        }
        return Err(Error::EncoderFailed {
            status: output.status.to_string(),
            diagnostics: diagnostics.trim().to_string(),
        });
    }
    Ok(())
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Drives external encoder binaries over segments of one source video.
#[derive(Clone, Debug)]
pub struct ExternalEncoder {
    pub templates: BTreeMap<Codec, CommandTemplates>,
    pub video: Arc<RawVideo>,
}

impl ExternalEncoder {
    pub fn new(video: Arc<RawVideo>) -> Self {
        ExternalEncoder {
            templates: BTreeMap::new(),
            video,
        }
    }

    pub fn with_template(mut self, codec: Codec, templates: CommandTemplates) -> Self {
        self.templates.insert(codec, templates);
        self
    }

    /// Encodes one segment: spawns the encoder, times it, sizes the output,
    /// decodes it and scores it against the source frames.
    pub fn encode_segment(&self, config: &EncodingConfig, segment: &Segment) -> Result<SegmentMeasurement> {
        let video = &*self.video;
        if segment.end > video.frame_count() || segment.start >= segment.end {
            return Err(Error::SegmentOutOfRange {
                index: segment.index,
                count: video.frame_count(),
            });
        }
        let t = self
            .templates
            .get(&config.codec)
            .ok_or_else(|| Error::MissingTemplate(config.codec.to_string()))?;
        if t.encode.trim().is_empty() || t.decode.trim().is_empty() {
            return Err(Error::MissingTemplate(format!("{} encode/decode", config.codec)));
        }

        let dir = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
        let input = dir.path().join("input.yuv");
        let output = dir.path().join("output.bin");
        let decoded = dir.path().join("decoded.yuv");
        let log = dir.path().join("vmaf.log");
        {
            let mut f = std::fs::File::create(&input).map_err(|e| Error::io(&input, e))?;
            video
                .write_yuv420(segment.frame_range(), &mut f)
                .map_err(|e| Error::io(&input, e))?;
        }

        let frames = segment.frame_count();
        let common = vec![
            ("width", video.width().to_string()),
            ("height", video.height().to_string()),
            ("fps", video.fps().to_string()),
            ("frames", frames.to_string()),
            ("threads", t.threads.to_string()),
        ];
        let filter_label = config.filters.to_string();
        let mut vars = common.clone();
        vars.extend([
            ("input", path_str(&input)),
            ("output", path_str(&output)),
            ("qp", config.qp.to_string()),
            ("gop_args", t.gop_args.get(&config.gop).cloned().unwrap_or_default()),
            ("gop", config.gop.clone()),
            ("keyint", t.keyint.unwrap_or(video.fps()).to_string()),
            ("filter_args", t.filter_args.get(&filter_label).cloned().unwrap_or_default()),
            ("gop_type", config.gop_type.map(|g| g.to_string()).unwrap_or_default()),
            ("preset", config.preset.clone()),
        ]);
        let started = Instant::now();
        run_shell(&substitute(&t.encode, &vars))?;
        let elapsed = started.elapsed().as_secs_f64().max(1e-9);
        let bytes = std::fs::metadata(&output).map_err(|e| Error::io(&output, e))?.len();

        let mut vars = common.clone();
        vars.extend([("input", path_str(&output)), ("output", path_str(&decoded))]);
        run_shell(&substitute(&t.decode, &vars))?;
        let reference = video.slice(segment.frame_range());
        let distorted = RawVideo::open_yuv420(&decoded, video.width(), video.height(), video.fps())?;
        let scores = media::psnr_global(&reference, &distorted)?;
        let ssim = media::ssim_mean(&reference, &distorted)?;

        let vmaf = match &t.vmaf {
            Some(cmd) => {
                let mut vars = common;
                vars.extend([
                    ("reference", path_str(&input)),
                    ("distorted", path_str(&decoded)),
                    ("log", path_str(&log)),
                ]);
                run_shell(&substitute(cmd, &vars))?;
                let text = std::fs::read_to_string(&log).map_err(|e| Error::io(&log, e))?;
                Some(media::parse_vmaf_log(&text)?.mean)
            }
            None => None,
        };

        Ok(SegmentMeasurement {
            config: config.clone(),
            segment_index: segment.index,
            frames,
            bitrate_kbps: 8.0 * bytes as f64 / segment.duration_s / 1000.0,
            psnr_db: scores.psnr611,
            vmaf,
            ssim: Some(ssim),
            fps: frames as f64 / elapsed,
            enc_time_s: elapsed,
        })
    }
}

impl SegmentEncoder for ExternalEncoder {
    fn encode(&self, config: &EncodingConfig, segment: &Segment) -> Result<SegmentMeasurement> {
        self.encode_segment(config, segment)
    }
}
