use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::AdamConfig;
use crate::data::{GradeMapping, SplitConfig, SyntheticConfig};
use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::ppo::PpoConfig;

/// Where the source and target instances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        generator: SyntheticConfig,
        n_source: usize,
        n_target: usize,
    },
    Letor {
        source: PathBuf,
        target: PathBuf,
        #[serde(default)]
        grade_mapping: GradeMapping,
        /// Pad or truncate every instance to this many items.
        #[serde(default)]
        items_per_instance: Option<usize>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            generator: SyntheticConfig::default(),
            n_source: 200,
            n_target: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    pub epochs: usize,
    pub lr: f64,
    /// Smooth-L1 transition point.
    pub beta: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 15,
            lr: 1e-3,
            beta: 0.3,
            batch_size: 32,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub epochs: usize,
    pub lr: f64,
    /// Reward margin m_R.
    pub margin: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Fraction of annotated target instances whose pairs are held back to
    /// pick the best epoch. 0 keeps the last epoch.
    pub val_fraction: f64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            epochs: 15,
            lr: 1e-3,
            margin: 1.0,
            batch_size: 32,
            weight_decay: 0.01,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage3Config {
    pub ppo: PpoConfig,
    pub lr: f64,
    pub weight_decay: f64,
    /// Evaluate the actor on the test split every this many iterations (0 = never).
    pub eval_every: usize,
}

impl Default for Stage3Config {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            lr: 1e-3,
            weight_decay: 0.01,
            eval_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub stage3: Stage3Config,
    /// Share of source instances held out for stage-1 validation.
    pub val_fraction: f64,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            stage3: Stage3Config::default(),
            val_fraction: 0.1,
            seeds: vec![0],
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// The full-scale settings: slower learning rates for the first two
    /// stages and 412 PPO iterations.
    pub fn full_scale() -> Self {
        let mut cfg = Self::default();
        cfg.stage1.lr = 2e-5;
        cfg.stage2.lr = 2e-5;
        cfg.stage3.ppo.n_iters = 412;
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        for (name, lr) in [("stage1", self.stage1.lr), ("stage2", self.stage2.lr), ("stage3", self.stage3.lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name}.lr must be positive, got {lr}")));
            }
        }
        if self.stage1.epochs == 0 || self.stage2.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.stage1.batch_size == 0 || self.stage2.batch_size == 0 {
            return fail("batch sizes must be positive");
        }
        if self.stage1.beta.is_nan() || self.stage1.beta <= 0.0 {
            return fail("stage1.beta must be positive");
        }
        if self.stage2.margin.is_nan() || self.stage2.margin <= 0.0 {
            return fail("stage2.margin must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return fail("val_fraction must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.stage2.val_fraction) {
            return fail("stage2.val_fraction must lie in [0, 1)");
        }
        if self.model.actor_hidden == 0 || self.model.trunk_dim == 0 || self.model.head_hidden == 0 {
            return fail("model widths must be positive");
        }
        if let DataSource::Synthetic { generator, n_source, n_target } = &self.data {
            generator.validate()?;
            if *n_source == 0 || *n_target < 2 {
                return fail("synthetic data needs n_source ≥ 1 and n_target ≥ 2");
            }
        }
        self.stage3.ppo.validate()
    }

    /// SHA-256 over the canonical JSON of everything that shapes a run,
    /// leaving out the seed list and output location.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.seeds.clear();
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub(crate) fn stage1_optimizer(&self) -> AdamConfig {
        AdamConfig::new(self.stage1.lr).weight_decay(self.stage1.weight_decay)
    }

    pub(crate) fn stage2_optimizer(&self) -> AdamConfig {
        AdamConfig::new(self.stage2.lr).weight_decay(self.stage2.weight_decay)
    }

    pub(crate) fn stage3_optimizer(&self) -> AdamConfig {
        AdamConfig::new(self.stage3.lr).weight_decay(self.stage3.weight_decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&cfg.to_json_pretty().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"stage1": {"epoch": 3}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"data": {"kind": "synthetic", "n_source": 3, "n_target": 4, "x": 1}}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_rates_and_epochs() {
        let mut cfg = ExperimentConfig::default();
        cfg.stage2.lr = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.stage1.epochs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_ignores_seeds_but_not_knobs() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { seeds: vec![4, 5], ..a.clone() };
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let mut c = a.clone();
        c.stage3.ppo.delta = -0.2;
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn full_scale_is_valid() {
        ExperimentConfig::full_scale().validate().unwrap();
    }
}
