//! The single JSON run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basin::{BasinSpec, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::experiment::EvaluationConfig;
use crate::model::{Activation, ModelConfig};
use crate::sampler::{SamplerConfig, SamplerMode};
use crate::train::{GraphConfig, TrainConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_hidden() -> usize {
    20
}
fn default_layers() -> usize {
    1
}
fn default_activation() -> Activation {
    Activation::Tanh
}

/// Model settings; the input width comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub gnn_layers: usize,
    #[serde(default)]
    pub output_hidden_dims: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            hidden_dim: default_hidden(),
            gnn_layers: default_layers(),
            output_hidden_dims: Vec::new(),
            activation: default_activation(),
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            feature_dim: FEATURE_COUNT,
            hidden_dim: self.hidden_dim,
            gnn_layers: self.gnn_layers,
            output_hidden_dims: self.output_hidden_dims.clone(),
            activation: self.activation,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Write `pgraph.json`.
    #[serde(default)]
    pub prediction_graph: bool,
    /// Write `influence.csv`.
    #[serde(default)]
    pub influence: bool,
    /// Write `neighborhoods_epoch<N>.json` for the best epoch of each seed.
    #[serde(default)]
    pub neighborhoods: bool,
}

fn default_ablation_modes() -> Vec<SamplerMode> {
    vec![
        SamplerMode::Random,
        SamplerMode::FairEdgeAblation,
        SamplerMode::FairAdjAblation,
        SamplerMode::FairDiscrete,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default = "default_ablation_modes")]
    pub modes: Vec<SamplerMode>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            modes: default_ablation_modes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub bundle_dir: PathBuf,
    pub output_dir: PathBuf,
    pub basin: BasinSpec,
    pub graph: GraphConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file; relative paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.bundle_dir.is_relative() {
            cfg.bundle_dir = base.join(&cfg.bundle_dir);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {}, expected {CONFIG_SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.basin.validate()?;
        self.sampler.validate()?;
        self.model.model_config().validate()?;
        self.train.validate()?;
        self.evaluation.validate()?;
        crate::graph::discretize(&[], &self.graph.thresholds, self.graph.labels.clone())?;
        if self.graph.hop_limit == Some(0) {
            return Err(Error::InvalidConfig("hop_limit must be >= 1".into()));
        }
        if self.ablation.modes.is_empty() {
            return Err(Error::InvalidConfig("ablation.modes must not be empty".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// A small, fully specified example configuration.
    pub fn example() -> Self {
        let mut basin = BasinSpec::new(40, 400, 7);
        basin.observation_sensitive_gradient = 0.6;
        basin.shade_sensitivity = 0.8;
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            bundle_dir: PathBuf::from("bundle"),
            output_dir: PathBuf::from("out"),
            basin,
            graph: GraphConfig::new(vec![50_000.0, 100_000.0]),
            sampler: SamplerConfig::new(SamplerMode::FairDiscrete),
            model: ModelSettings {
                hidden_dim: 8,
                ..ModelSettings::default()
            },
            train: TrainConfig {
                epochs: 5,
                sequence_length: 120,
                seeds: vec![1],
                ..TrainConfig::default()
            },
            evaluation: EvaluationConfig::default(),
            audit: AuditConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips() {
        let cfg = RunConfig::example();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.digest(), back.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::example().to_json()).unwrap();
        v["train"]["epoch"] = 3.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn invalid_density_is_a_validation_error() {
        let mut cfg = RunConfig::example();
        cfg.basin.observation_density = 1.5;
        let err = RunConfig::from_json(&cfg.to_json()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
