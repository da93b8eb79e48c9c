//! Stage 3: joint actor-critic optimisation against the frozen reward model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::supervised::stage_rng;
use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, InstanceIndex};
use crate::models::{init_critic_from_reward, ActorModel, CriticModel, RewardModel};
use crate::ppo::{collect_trajectories, ppo_iteration, IterationDiagnostics, RolloutModels};

const STAGE3_SALT: u64 = 0x5_7A6E_0003;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage3Record {
    #[serde(flatten)]
    pub diagnostics: IterationDiagnostics,
    /// Test NDCG@{1,3,5,10,20} after this iteration's update, when evaluated.
    pub test_ndcg: Option<[f64; 5]>,
}

/// Everything needed to continue stage 3 exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage3State {
    /// Iterations completed so far.
    pub iteration: usize,
    pub actor: ActorModel,
    pub critic: CriticModel,
    /// Actor as it was before the most recent update.
    pub previous_actor: Option<ActorModel>,
    pub rng: ChaCha8Rng,
    pub history: Vec<Stage3Record>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage3Outcome {
    pub actor: ActorModel,
    pub critic: CriticModel,
    pub history: Vec<Stage3Record>,
}

/// A stage-3 run that can be advanced one iteration at a time.
pub struct Stage3Session<'a> {
    cfg: &'a ExperimentConfig,
    reward: &'a RewardModel,
    split: &'a DatasetSplit,
    index: InstanceIndex<'a>,
    seed: u64,
    state: Stage3State,
}

impl<'a> Stage3Session<'a> {
    pub fn start(
        cfg: &'a ExperimentConfig,
        actor: &ActorModel,
        reward: &'a RewardModel,
        split: &'a DatasetSplit,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stage_rng(seed, STAGE3_SALT);
        let critic = init_critic_from_reward(reward, &cfg.model, &mut rng)?;
        // Fresh optimizer state for the actor as well.
        let actor = ActorModel {
            params: crate::autodiff::ScorerParams::from_layers(
                actor.params.layers().to_vec(),
                actor.params.activation(),
                actor.params.activate_output(),
            )?,
        };
        let state = Stage3State { iteration: 0, actor, critic, previous_actor: None, rng, history: Vec::new() };
        Self::resume(cfg, reward, split, seed, state)
    }

    pub fn resume(
        cfg: &'a ExperimentConfig,
        reward: &'a RewardModel,
        split: &'a DatasetSplit,
        seed: u64,
        state: Stage3State,
    ) -> Result<Self> {
        cfg.validate()?;
        if split.stage3_pairs.is_empty() {
            return Err(Error::data("stage 3 needs at least one unannotated pair"));
        }
        if state.iteration > cfg.stage3.ppo.n_iters {
            return Err(Error::Checkpoint(format!(
                "state is at iteration {} but the run has only {}",
                state.iteration, cfg.stage3.ppo.n_iters
            )));
        }
        // Grades of the target training instances are never consulted here.
        let index = InstanceIndex::new(&split.target_train);
        Ok(Self { cfg, reward, split, index, seed, state })
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.cfg.stage3.ppo.n_iters
    }

    pub fn state(&self) -> &Stage3State {
        &self.state
    }

    /// Collects trajectories, runs one PPO update and logs the result.
    pub fn step(&mut self) -> Result<&Stage3Record> {
        if self.is_done() {
            return Err(Error::invalid("stage 3 already finished"));
        }
        let ppo = &self.cfg.stage3.ppo;
        let st = &mut self.state;
        let stream_seed: u64 = st.rng.random();
        let records = collect_trajectories(
            RolloutModels {
                actor: &st.actor,
                reward: self.reward,
                critic: &st.critic,
                reference: st.previous_actor.as_ref(),
            },
            &self.split.stage3_pairs,
            &self.index,
            ppo,
            stream_seed,
        )?;
        let before = st.actor.clone();
        let diagnostics = ppo_iteration(
            st.iteration,
            &records,
            &mut st.actor,
            &mut st.critic,
            ppo,
            &self.cfg.stage3_optimizer(),
            &mut st.rng,
        )?;
        st.previous_actor = Some(before);
        st.iteration += 1;
        let every = self.cfg.stage3.eval_every;
        let test_ndcg = if every > 0 && (st.iteration.is_multiple_of(every) || st.iteration == ppo.n_iters) {
            Some(evaluate_model(&st.actor, &self.split.test, "test", self.seed, st.iteration)?.ndcg())
        } else {
            None
        };
        st.history.push(Stage3Record { diagnostics, test_ndcg });
        Ok(st.history.last().expect("just pushed"))
    }

    pub fn run_to_end(mut self) -> Result<Stage3Outcome> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> Stage3Outcome {
        Stage3Outcome { actor: self.state.actor, critic: self.state.critic, history: self.state.history }
    }

    pub fn into_state(self) -> Stage3State {
        self.state
    }
}

pub fn run_stage3(
    cfg: &ExperimentConfig,
    actor: &ActorModel,
    reward: &RewardModel,
    split: &DatasetSplit,
    seed: u64,
) -> Result<Stage3Outcome> {
    Stage3Session::start(cfg, actor, reward, split, seed)?.run_to_end()
}
