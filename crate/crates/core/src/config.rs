//! Flat run configuration shared by the trainer, artifacts and the CLI.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GsanError, Result};
use crate::graph::SplitSpec;
use crate::model::GsanConfig;
use crate::train::OptimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub split: SplitSpec,
    /// Scale each feature row to sum to one before training.
    pub row_normalize: bool,
    /// Abort when the loss exceeds this multiple of its first value ...
    pub divergence_factor: f64,
    /// ... for this many consecutive epochs.
    pub divergence_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            patience: 10,
            split: SplitSpec::Standard,
            row_normalize: false,
            divergence_factor: 10.0,
            divergence_epochs: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: GsanConfig,
    #[serde(flatten)]
    pub optim: OptimConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
    pub seed: u64,
    pub dataset: String,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: GsanConfig::default(),
            optim: OptimConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
            dataset: String::new(),
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    /// Parses the flat JSON form, rejecting keys that no field claims.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| GsanError::Invalid("run config must be a JSON object".into()))?;
        let known = RunConfig::known_keys();
        let unknown: Vec<&String> = obj.keys().filter(|k| !known.contains(k.as_str())).collect();
        if !unknown.is_empty() {
            return Err(GsanError::Invalid(format!("unknown config keys {:?}", unknown)));
        }
        let cfg: RunConfig = serde_json::from_value(value)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GsanError::io(path, e))?;
        RunConfig::from_json(&text).map_err(|e| match e {
            GsanError::Io { .. } => e,
            other => GsanError::format(path, other.to_string()),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn known_keys() -> BTreeSet<String> {
        match RunConfig::default().to_value() {
            serde_json::Value::Object(m) => m.keys().cloned().collect(),
            _ => unreachable!("config serializes to an object"),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.model.check()?;
        self.optim.check()?;
        if self.train.max_epochs == 0 {
            return Err(GsanError::Invalid("max_epochs must be positive".into()));
        }
        if !(self.train.divergence_factor > 1.0) || self.train.divergence_epochs == 0 {
            return Err(GsanError::Invalid("divergence guard needs factor > 1 and epochs > 0".into()));
        }
        Ok(())
    }
}
