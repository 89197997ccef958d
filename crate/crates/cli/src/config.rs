//! Run configuration shared by every subcommand, read from TOML or JSON.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gazerank_core::annotation::StoreConfig;
use gazerank_core::gaze::GazeConfig;
use gazerank_core::pipeline::{BenchmarkOptions, TrainConfig};
use gazerank_core::ModelConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub gaze: GazeConfig,
    pub benchmark: BenchmarkOptions,
    pub serve: StoreConfig,
    /// Train on cursor-trace gaze as well as eye-tracker gaze.
    pub allow_proxy_gaze: bool,
}

impl Config {
    /// `.json` files parse as JSON, everything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some("toml") | None => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some(other) => bail!("unsupported config extension .{other}"),
        };
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
