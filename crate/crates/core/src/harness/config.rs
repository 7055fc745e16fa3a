//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::AugmentationPolicy;
use crate::error::{Error, Result};
use crate::models::{LayerGrouping, ModelSpec};
use crate::params::GroupPartition;
use crate::regularizers::{Regularizer, RegularizerKind};
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Seeds `rmda run` trains in parallel when no seed is given on the
    /// command line. Empty means just `seed`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    pub epochs: u64,
    pub batch_size: usize,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Evaluate the variance-reduction diagnostic at every logged epoch
    /// (RMDA and RDA only; costs one full-gradient pass).
    #[serde(default = "default_true")]
    pub vr_diagnostic: bool,
    pub model: ModelSpec,
    pub data: DataSource,
    pub optimizer: OptimizerConfig,
    pub regularizer: RegularizerConfig,
    #[serde(default)]
    pub grouping: GroupingConfig,
    #[serde(default)]
    pub augmentation: AugmentationPolicy,
    #[serde(default)]
    pub init: InitConfig,
}

fn default_log_every() -> u64 {
    1
}

/// Seeds share a log path up to the `.seed<N>` suffix, so they must differ.
pub fn check_distinct(seeds: &[u64]) -> Result<()> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    match sorted.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(Error::Config(format!("seed {} is listed twice", w[0]))),
        None => Ok(()),
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Structured-sparse synthetic task; the validation split is drawn from
    /// the same ground truth.
    Synthetic {
        n: usize,
        #[serde(default)]
        val_n: usize,
        zero_fraction: f64,
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_weight_scale")]
        weight_scale: f64,
        /// Defaults to the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// IDX image/label files. Relative paths are resolved against the
    /// `RMDA_DATA_DIR` environment variable when it is set.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        val_images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        val_labels: Option<PathBuf>,
    },
}

fn default_margin() -> f64 {
    0.5
}

fn default_weight_scale() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Rmda,
    Rda,
    ProxSgd,
    Msgd,
}

impl OptimizerKind {
    pub fn is_dual_averaging(self) -> bool {
        matches!(self, OptimizerKind::Rmda | OptimizerKind::Rda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub eta: Schedule,
    /// RMDA momentum schedule `c(epoch)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Schedule>,
    /// Heavy-ball coefficient for `prox_sgd` / `msgd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    /// Epochs at whose start RMDA/RDA restart.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub restart_epochs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub lambda_l1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl RegularizerConfig {
    pub fn none() -> Self {
        Self { kind: RegularizerKind::None, lambda: 0.0, lambda_l1: 0.0, omega: None, lo: None, hi: None }
    }

    pub fn group_lasso(lambda: f64) -> Self {
        Self { kind: RegularizerKind::GroupLasso, lambda, ..Self::none() }
    }

    /// Instantiates the regularizer over `partition`.
    pub fn build(&self, partition: &GroupPartition) -> Result<Regularizer> {
        let omega = || self.omega.ok_or_else(|| Error::Config("MCP regularizers need `omega`".into()));
        let p = partition.clone();
        let reg = match self.kind {
            RegularizerKind::None => Regularizer::None,
            RegularizerKind::L1 => Regularizer::L1 { lambda: self.lambda },
            RegularizerKind::GroupLasso => Regularizer::GroupLasso { lambda: self.lambda, partition: p },
            RegularizerKind::SparseGroupLasso => {
                Regularizer::SparseGroupLasso { lambda_l1: self.lambda_l1, lambda_group: self.lambda, partition: p }
            }
            RegularizerKind::GroupMcp => Regularizer::GroupMcp { lambda: self.lambda, omega: omega()?, partition: p },
            RegularizerKind::L1GroupMcp => Regularizer::L1GroupMcp {
                lambda_l1: self.lambda_l1,
                lambda_group: self.lambda,
                omega: omega()?,
                partition: p,
            },
            RegularizerKind::BoxIndicator => Regularizer::BoxIndicator {
                lo: self.lo.ok_or_else(|| Error::Config("box indicator needs `lo`".into()))?,
                hi: self.hi.ok_or_else(|| Error::Config("box indicator needs `hi`".into()))?,
            },
        };
        reg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(reg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupingConfig {
    /// Groups used by the regularizer; defaults to column-wise for dense
    /// layers and channel-wise for the convolution.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train: Vec<LayerGrouping>,
    /// Groups used by the sparsity metrics; defaults to the training groups
    /// for dense-only models and kernel-wise for the convolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<Vec<LayerGrouping>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    #[default]
    Uniform,
    Zeros,
    /// Synthetic ground truth plus `N(0, sigma^2)` noise on every coordinate.
    TruthNoise { sigma: f64 },
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        check_distinct(&self.seeds)?;
        if self.optimizer.restart_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("restart_epochs must be strictly increasing".into());
        }
        if self.optimizer.restart_epochs.iter().any(|&e| e >= self.epochs) {
            return bad("restart_epochs must be below epochs".into());
        }
        if !self.optimizer.kind.is_dual_averaging() && !self.optimizer.restart_epochs.is_empty() {
            return bad("restart_epochs only apply to rmda / rda".into());
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        let cfg = |e: Error| Error::Config(e.to_string());
        self.optimizer.eta.check_positive(0..self.epochs).map_err(cfg)?;
        match self.optimizer.kind {
            OptimizerKind::Rmda => {
                let c = self.optimizer.c.as_ref().ok_or_else(|| Error::Config("rmda needs a `c` schedule".into()))?;
                c.check_unit_interval(0..self.epochs).map_err(cfg)?;
            }
            OptimizerKind::ProxSgd | OptimizerKind::Msgd => {
                let mu = self.optimizer.momentum.unwrap_or(0.0);
                if !(0.0..1.0).contains(&mu) {
                    return bad(format!("momentum must lie in [0, 1), got {mu}"));
                }
            }
            OptimizerKind::Rda => {}
        }
        if self.optimizer.kind == OptimizerKind::Msgd && self.regularizer.kind != RegularizerKind::None {
            return bad("msgd is the unregularized baseline; use prox_sgd with a regularizer".into());
        }
        self.augmentation.validate()?;
        match &self.data {
            DataSource::Synthetic { n, zero_fraction, margin, .. } => {
                if *n == 0 || !(0.0..1.0).contains(zero_fraction) || margin.is_nan() || *margin < 0.0 {
                    return bad("synthetic data needs n >= 1, zero_fraction in [0, 1), margin >= 0".into());
                }
            }
            DataSource::Idx { val_images, val_labels, .. } => {
                if val_images.is_some() != val_labels.is_some() {
                    return bad("val_images and val_labels must be given together".into());
                }
                if matches!(self.init, InitConfig::TruthNoise { .. }) {
                    return bad("truth_noise initialization needs synthetic data".into());
                }
            }
        }
        // builds the partitions and the regularizer
        let train = self.train_partition()?;
        self.eval_partition()?;
        self.regularizer.build(&train)?;
        Ok(())
    }

    pub fn train_groupings(&self) -> Vec<LayerGrouping> {
        if self.grouping.train.is_empty() {
            self.model.default_train_grouping()
        } else {
            self.grouping.train.clone()
        }
    }

    pub fn eval_groupings(&self) -> Vec<LayerGrouping> {
        match &self.grouping.eval {
            Some(g) => g.clone(),
            None if self.grouping.train.is_empty() => self.model.default_eval_grouping(),
            None => self.grouping.train.clone(),
        }
    }

    pub fn train_partition(&self) -> Result<GroupPartition> {
        self.model.build_groups(&self.train_groupings()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn eval_partition(&self) -> Result<GroupPartition> {
        self.model.build_groups(&self.eval_groupings()).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;

    #[test]
    fn presets_round_trip() {
        for name in presets::names() {
            let config = presets::load(name).unwrap();
            let text = config.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), config, "{name}");
        }
    }

    #[test]
    fn validation_errors() {
        let base = presets::load("synthetic-logreg").unwrap();

        let mut c = base.clone();
        c.epochs = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));

        let mut c = base.clone();
        c.optimizer.restart_epochs = vec![20, 10];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.optimizer.restart_epochs = vec![c.epochs];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.seeds = vec![4, 1, 4];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.optimizer.c = None;
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.regularizer.lambda = -1.0;
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.optimizer.eta = Schedule::constant(0.0);
        assert!(c.validate().is_err());

        let text = base.to_toml_string().unwrap().replace("batch_size", "batchsize");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }
}
