//! Experiment configuration: a single JSON document describing the model,
//! the data sources, the sampler grid, and the output location.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::SamplerKind;

/// Environment variable naming the default dataset root; relative dataset
/// paths are resolved against it when it is set.
pub const DATA_DIR_ENV: &str = "SGMCMC_DATA_DIR";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    GaussianToy {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_cov_diag: Option<Vec<f64>>,
    },
    LinearRegression {
        prior_variance: f64,
    },
    LogisticRegression {
        prior_variance: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// No dataset (toy model runs).
    None,
    /// Synthetic regression data generated in-process.
    Synthetic { n: usize, dim: usize, seed: u64 },
    /// An IDX image/label file pair filtered to a digit pair.
    Idx { images: PathBuf, labels: PathBuf, positive_digit: u8, negative_digit: u8 },
    /// A LIBSVM text file.
    Libsvm { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub out_dim: usize,
    pub seed: u64,
}

fn default_beta() -> f64 {
    1.0
}

fn default_burn_in() -> f64 {
    0.2
}

fn default_checkpoint() -> usize {
    1
}

/// One experiment: every (sampler, stepsize, friction) cell of the grid runs
/// as an independent seeded chain.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub dataset: DatasetSource,
    /// Held-out data for the logistic metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_dataset: Option<DatasetSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionConfig>,
    pub samplers: Vec<SamplerKind>,
    pub stepsizes: Vec<f64>,
    pub frictions: Vec<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Defaults to the model dimension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_mass: Option<f64>,
    pub batch: usize,
    pub passes: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    pub seed: u64,
    /// Passes between metric rows.
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn basic_checks(&self) -> Result<()> {
        if self.samplers.is_empty() {
            return Err(Error::Config("no samplers configured".into()));
        }
        if self.stepsizes.is_empty() || self.stepsizes.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Config("stepsizes must be positive and nonempty".into()));
        }
        if self.frictions.is_empty() || self.frictions.iter().any(|&a| a < 0.0) {
            return Err(Error::Config("frictions must be nonnegative and nonempty".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config("burn_in_fraction must lie in [0, 1)".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config("beta must be positive".into()));
        }
        if matches!(self.model, ModelConfig::LogisticRegression { .. }) && self.test_dataset.is_none()
        {
            return Err(Error::Config("logistic experiments need a test_dataset".into()));
        }
        Ok(())
    }
}

/// Resolves a dataset path against `SGMCMC_DATA_DIR` when it is relative and
/// the variable is set.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(root) = env::var(DATA_DIR_ENV) {
            if !root.is_empty() {
                return PathBuf::from(root).join(path);
            }
        }
    }
    path.to_path_buf()
}
