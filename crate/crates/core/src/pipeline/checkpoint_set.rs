use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::reinforce::Stage3State;
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::models::{ActorModel, RewardModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Stage1,
    Stage2,
    Stage3,
}

/// The artifacts of a run up to and including `stage`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSet {
    pub stage: StageTag,
    pub config_hash: String,
    pub seed: u64,
    pub stage1_actor: Option<ActorModel>,
    pub reward: Option<RewardModel>,
    pub stage3: Option<Stage3State>,
}

impl CheckpointSet {
    pub const KIND: &'static str = "checkpoint-set";

    pub fn new(stage: StageTag, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            stage,
            config_hash: cfg.hash()?,
            seed,
            stage1_actor: None,
            reward: None,
            stage3: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, Self::KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: Self = checkpoint::load(path, Self::KIND)?;
        set.check_complete()?;
        Ok(set)
    }

    /// Loads a set and refuses it unless it is at `stage` and was written
    /// under the same configuration.
    pub fn load_for(path: &Path, stage: StageTag, cfg: &ExperimentConfig) -> Result<Self> {
        let set = Self::load(path)?;
        if set.stage != stage {
            return Err(Error::Checkpoint(format!(
                "{} holds a {:?} checkpoint, expected {stage:?}",
                path.display(),
                set.stage
            )));
        }
        let hash = cfg.hash()?;
        if set.config_hash != hash {
            return Err(Error::Checkpoint(format!(
                "configuration hash mismatch: checkpoint {} vs current {hash}",
                set.config_hash
            )));
        }
        Ok(set)
    }

    fn check_complete(&self) -> Result<()> {
        let missing = |what: &str| Err(Error::Checkpoint(format!("{:?} checkpoint lacks {what}", self.stage)));
        if self.stage1_actor.is_none() {
            return missing("the stage-1 actor");
        }
        if matches!(self.stage, StageTag::Stage2 | StageTag::Stage3) && self.reward.is_none() {
            return missing("the reward model");
        }
        if self.stage == StageTag::Stage3 && self.stage3.is_none() {
            return missing("the stage-3 state");
        }
        Ok(())
    }

    pub fn stage1_actor(&self) -> Result<&ActorModel> {
        self.stage1_actor.as_ref().ok_or_else(|| Error::Checkpoint("no stage-1 actor".into()))
    }

    pub fn reward(&self) -> Result<&RewardModel> {
        self.reward.as_ref().ok_or_else(|| Error::Checkpoint("no reward model".into()))
    }
}
