//! Optional JSON run configuration. Each section mirrors a core config
//! struct; missing fields take the library defaults and command-line flags
//! override whatever the file sets.

use std::path::Path;

use g2t_core::{ModelConfig, Preprocessor, Shark2Config, SynthConfig, TrainConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub preprocess: Preprocessor,
    /// Kept partial so an unset `dense_dim` can follow `hidden_dim`.
    pub model: Option<serde_json::Value>,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub beam: BeamSection,
    pub shark2: Shark2Config,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamSection {
    pub beam_width: usize,
}

impl Default for BeamSection {
    fn default() -> Self {
        Self { beam_width: 16 }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Model hyperparameters from the file; `dense_dim` defaults to twice
    /// `hidden_dim` when only the latter is given.
    pub fn model_config(&self) -> CliResult<ModelConfig> {
        let Some(v) = &self.model else {
            return Ok(ModelConfig::default());
        };
        let mut cfg: ModelConfig =
            serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("config model section: {e}")))?;
        if v.get("dense_dim").is_none() {
            cfg.dense_dim = 2 * cfg.hidden_dim;
        }
        Ok(cfg)
    }
}
