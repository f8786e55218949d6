//! Flags shared by the encoding commands and the workspace they resolve to.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;

use segopt::encoder::{Codec, CodecGrid, EncoderRouter, ExternalEncoder, SyntheticEncoder, SyntheticLaw};
use segopt::media::{split_frames, split_segments, RawVideo, Segment};

use crate::config::{ProjectConfig, VideoDescriptor};
use crate::failure::Failure;

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Project configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// x265, vp9, svt-av1 or synthetic.
    #[arg(long, default_value = "synthetic")]
    pub codec: String,
    /// Raw planar YUV 4:2:0 input.
    #[arg(long)]
    pub video: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub fps: Option<u32>,
    /// Frame count for the synthetic codec when no video is given.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Synthetic law: basketball-drive, cactus, or a JSON file.
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long)]
    pub segment_seconds: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

pub const DEFAULT_SEGMENT_SECONDS: f64 = 3.0;
const SYNTHETIC_FRAMES: usize = 500;
const SYNTHETIC_FPS: u32 = 50;

pub struct Workspace {
    pub config: ProjectConfig,
    pub codec: Codec,
    pub grid: CodecGrid,
    pub segments: Vec<Segment>,
    pub encoder: EncoderRouter,
    pub workers: Option<usize>,
}

pub fn load_law(spec: &str) -> Result<SyntheticLaw, Failure> {
    match spec.to_ascii_lowercase().as_str() {
        "basketball-drive" | "basketball" | "default" => Ok(SyntheticLaw::basketball_drive()),
        "cactus" => Ok(SyntheticLaw::cactus()),
        _ => {
            let text = std::fs::read_to_string(spec).map_err(|e| Failure::data(format!("{spec}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| Failure::data(format!("{spec}: {e}")))
        }
    }
}

fn video_descriptor(args: &InputArgs, config: &ProjectConfig) -> Result<Option<VideoDescriptor>, Failure> {
    let Some(path) = args.video.clone() else {
        return Ok(config.video.clone());
    };
    let from_cfg = config.video.as_ref();
    let need = |v: Option<usize>, c: Option<usize>, flag: &str| {
        v.or(c).ok_or_else(|| Failure::usage(format!("--video needs --{flag}")))
    };
    Ok(Some(VideoDescriptor {
        path,
        width: need(args.width, from_cfg.map(|v| v.width), "width")?,
        height: need(args.height, from_cfg.map(|v| v.height), "height")?,
        fps: args
            .fps
            .or(from_cfg.map(|v| v.fps))
            .ok_or_else(|| Failure::usage("--video needs --fps"))?,
    }))
}

pub fn load_video(desc: &VideoDescriptor) -> Result<RawVideo, Failure> {
    Ok(RawVideo::open_yuv420(&desc.path, desc.width, desc.height, desc.fps)?)
}

pub fn load_config(path: Option<&Path>) -> Result<ProjectConfig, Failure> {
    match path {
        Some(p) => ProjectConfig::load(p),
        None => Ok(ProjectConfig::default()),
    }
}

impl InputArgs {
    pub fn resolve(&self) -> Result<Workspace, Failure> {
        let config = load_config(self.config.as_deref())?;
        let codec: Codec = self.codec.parse()?;
        let seconds = self
            .segment_seconds
            .or(config.segment_seconds)
            .unwrap_or(DEFAULT_SEGMENT_SECONDS);
        if !(seconds > 0.0) {
            return Err(Failure::usage(format!("--segment-seconds must be positive, got {seconds}")));
        }
        let workers = self.workers.or(config.workers);
        if workers == Some(0) {
            return Err(Failure::usage("--workers must be at least 1"));
        }
        let video = video_descriptor(self, &config)?;

        let mut router = EncoderRouter {
            synthetic: None,
            external: None,
        };
        let (grid, segments) = if codec == Codec::Synthetic {
            let law = load_law(self.law.as_deref().or(config.synthetic_law.as_deref()).unwrap_or("default"))?;
            let grid = config.grids.get(&codec).cloned().unwrap_or_else(|| CodecGrid::synthetic(&law));
            let (frames, fps) = match (&video, self.frames) {
                (_, Some(n)) => (n, self.fps.unwrap_or(SYNTHETIC_FPS)),
                (Some(v), None) => (load_video(v)?.frame_count(), v.fps),
                (None, None) => (SYNTHETIC_FRAMES, self.fps.unwrap_or(SYNTHETIC_FPS)),
            };
            router.synthetic = Some(SyntheticEncoder::new(law));
            (grid, split_frames(frames, fps as f64, seconds)?)
        } else {
            let desc = video.ok_or_else(|| Failure::usage(format!("codec {codec} needs --video or a [video] config entry")))?;
            let template = config
                .templates
                .get(&codec)
                .cloned()
                .ok_or_else(|| Failure::usage(format!("no command template for {codec}; add [templates.{codec}] to the config")))?;
            let grid = match config.grids.get(&codec) {
                Some(g) => g.clone(),
                None => CodecGrid::default_for(codec)?,
            };
            let raw = load_video(&desc)?;
            let segments = split_segments(&raw, seconds)?;
            router.external = Some(ExternalEncoder::new(Arc::new(raw)).with_template(codec, template));
            (grid, segments)
        };
        if grid.codec != codec {
            return Err(Failure::usage(format!("grid for {codec} is declared as {}", grid.codec)));
        }
        Ok(Workspace {
            config,
            codec,
            grid,
            segments,
            encoder: router,
            workers,
        })
    }
}
