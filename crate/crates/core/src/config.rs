//! Run configuration shared by every pipeline stage.
//!
//! Every field has a default, so `{}` is a complete configuration; unknown
//! keys are rejected at any depth.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::calibration::TemperatureGrid;
use crate::corpus::SplitSpec;
use crate::error::{Error, Result};
use crate::metrics::{Weights, DEFAULT_EPSILON};
use crate::stats::BootstrapSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction_of_train: f64,
    pub undersample_threshold: f64,
    /// Rebalance the training split after splitting.
    pub undersample: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train_fraction: s.train_fraction,
            val_fraction_of_train: s.val_fraction_of_train,
            undersample_threshold: s.undersample_threshold,
            undersample: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub min_similarity: f64,
    pub max_attempts: usize,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            min_similarity: 0.9,
            max_attempts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub bins: usize,
    pub epsilon: f64,
    pub weights: Weights,
    pub temperature_grid: TemperatureGrid,
    pub bootstrap: BootstrapConfig,
    pub robustness_min_similarity: f64,
    pub similarity_levels: Vec<f64>,
    pub seed: u64,
    pub split: SplitConfig,
    pub perturbation: PerturbationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bins: 10,
            epsilon: DEFAULT_EPSILON,
            weights: Weights::default(),
            temperature_grid: TemperatureGrid::default(),
            bootstrap: BootstrapConfig::default(),
            robustness_min_similarity: 0.9,
            similarity_levels: alloc::vec![1.0, 0.95, 0.9, 0.85, 0.8],
            seed: 42,
            split: SplitConfig::default(),
            perturbation: PerturbationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 1 {
            return Err(Error::param("bins", "need at least one bin"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("{} is not positive", self.epsilon)));
        }
        self.weights.validate()?;
        self.temperature_grid.validate()?;
        self.bootstrap_spec().validate()?;
        if !(0.0..=1.0).contains(&self.robustness_min_similarity) {
            return Err(Error::param(
                "robustness_min_similarity",
                format!("{} is outside [0, 1]", self.robustness_min_similarity),
            ));
        }
        if self.similarity_levels.is_empty() {
            return Err(Error::param("similarity_levels", "no levels configured"));
        }
        if let Some(l) = self.similarity_levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::param("similarity_levels", format!("{l} is outside [0, 1]")));
        }
        self.split_spec().validate()?;
        if !(0.0..=1.0).contains(&self.perturbation.min_similarity) {
            return Err(Error::param("perturbation.min_similarity", "must lie in [0, 1]"));
        }
        if self.perturbation.max_attempts < 1 {
            return Err(Error::param("perturbation.max_attempts", "must be at least 1"));
        }
        Ok(())
    }

    pub fn bootstrap_spec(&self) -> BootstrapSpec {
        BootstrapSpec {
            resamples: self.bootstrap.resamples,
            level: self.bootstrap.level,
            seed: self.seed,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            seed: self.seed,
            train_fraction: self.split.train_fraction,
            val_fraction_of_train: self.split.val_fraction_of_train,
            undersample_threshold: self.split.undersample_threshold,
        }
    }
}
