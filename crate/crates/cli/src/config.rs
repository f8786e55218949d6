//! TOML project configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segopt::constraints::Tolerances;
use segopt::encoder::{Codec, CodecGrid, CommandTemplates};

use crate::failure::Failure;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoDescriptor {
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub fps: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub bitrate: Option<f64>,
    pub fps: Option<f64>,
    pub quality: Option<f64>,
}

impl ToleranceOverrides {
    pub fn apply(&self, t: &mut Tolerances) {
        if let Some(v) = self.bitrate {
            t.bitrate_rel = v;
        }
        if let Some(v) = self.fps {
            t.fps_rel = v;
        }
        if let Some(v) = self.quality {
            t.quality_rel = v;
        }
    }

    fn values(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [("bitrate", self.bitrate), ("fps", self.fps), ("quality", self.quality)]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    /// Codecs this project encodes with; each needs a template unless synthetic.
    #[serde(default)]
    pub enabled: Vec<Codec>,
    #[serde(default)]
    pub templates: BTreeMap<Codec, CommandTemplates>,
    /// Replacement grids, keyed by codec.
    #[serde(default)]
    pub grids: BTreeMap<Codec, CodecGrid>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    /// Named activity policies (JSON files).
    #[serde(default)]
    pub policies: BTreeMap<String, PathBuf>,
    /// Synthetic law: a preset name or a JSON file.
    pub synthetic_law: Option<String>,
    pub video: Option<VideoDescriptor>,
    pub segment_seconds: Option<f64>,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let mut cfg: ProjectConfig =
            toml::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    // relative paths are taken from the config file's directory
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(v) = &mut self.video {
            fix(&mut v.path);
        }
        for p in self.policies.values_mut() {
            fix(p);
        }
        if let Some(law) = &mut self.synthetic_law {
            if law.ends_with(".json") && Path::new(law.as_str()).is_relative() {
                *law = base.join(&*law).display().to_string();
            }
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        for c in &self.enabled {
            if *c != Codec::Synthetic && !self.templates.contains_key(c) {
                return Err(Failure::usage(format!("codec {c} is enabled but has no command template")));
            }
        }
        for (name, v) in self.tolerances.values() {
            if !(0.0..=0.5).contains(&v) {
                return Err(Failure::usage(format!("tolerance {name} = {v} is outside [0, 0.5]")));
            }
        }
        if let Some(s) = self.segment_seconds {
            if !(s > 0.0) {
                return Err(Failure::usage(format!("segment_seconds must be positive, got {s}")));
            }
        }
        Ok(())
    }
}
