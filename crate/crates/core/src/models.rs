//! Actor, reward and critic networks and the pair-state encoding they share.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, NodeId, ParamSlot, ScorerParams, Tape};
use crate::checkpoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub actor_hidden: usize,
    pub trunk_dim: usize,
    pub head_hidden: usize,
    pub activation: Activation,
    /// Weight scale of the critic's freshly initialised value head.
    pub value_head_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            actor_hidden: 64,
            trunk_dim: 64,
            head_hidden: 64,
            activation: Activation::Tanh,
            value_head_scale: 0.1,
        }
    }
}

/// A pair state: the features of the item in position 1 followed by the
/// features of the item in position 2. Order matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEncoding {
    values: Vec<f64>,
    feature_dim: usize,
}

impl StateEncoding {
    pub fn new(first: &[f64], second: &[f64]) -> Result<Self> {
        if first.len() != second.len() || first.is_empty() {
            return Err(Error::Length {
                what: "pair item features",
                left: first.len(),
                right: second.len(),
            });
        }
        let mut values = Vec::with_capacity(2 * first.len());
        values.extend_from_slice(first);
        values.extend_from_slice(second);
        Ok(Self {
            values,
            feature_dim: first.len(),
        })
    }

    pub fn first(&self) -> &[f64] {
        &self.values[..self.feature_dim]
    }

    pub fn second(&self) -> &[f64] {
        &self.values[self.feature_dim..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.second(), self.first()).expect("halves have equal width")
    }
}

/// Per-item relevance scorer: `feature_dim → hidden → 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorModel {
    pub params: ScorerParams,
}

impl ActorModel {
    pub const KIND: &'static str = "actor";

    pub fn new<R: Rng + ?Sized>(feature_dim: usize, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let params = ScorerParams::init(
            &[feature_dim, cfg.actor_hidden, 1],
            cfg.activation,
            false,
            rng,
        )?;
        Ok(Self { params })
    }

    pub fn feature_dim(&self) -> usize {
        self.params.input_width()
    }

    pub fn score(&self, features: &[f64]) -> Result<f64> {
        Ok(self.params.predict(features)?[0])
    }

    pub fn score_node(&self, tape: &mut Tape<'_>, slot: ParamSlot, features: &[f64]) -> Result<NodeId> {
        let x = tape.leaf(features.to_vec());
        self.params.forward_node(tape, slot, x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, Self::KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, Self::KIND)
    }
}

/// Scores of both items of a pair state, each evaluated independently.
pub fn actor_scores(actor: &ActorModel, state: &StateEncoding) -> Result<(f64, f64)> {
    Ok((actor.score(state.first())?, actor.score(state.second())?))
}

/// Two-way softmax over {keep order, swap order} with logits `(p1, p2) / temperature`.
pub fn policy_distribution(p1: f64, p2: f64, temperature: f64) -> Result<[f64; 2]> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    // σ((p1 − p2)/τ), written to stay finite for large gaps.
    let z = (p1 - p2) / temperature;
    let keep = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    Ok([keep, 1.0 - keep])
}

/// `R(initial, candidate) = head([trunk(initial), trunk(candidate)])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub trunk: ScorerParams,
    pub head: ScorerParams,
}

impl RewardModel {
    pub const KIND: &'static str = "reward";

    pub fn new<R: Rng + ?Sized>(feature_dim: usize, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let trunk = ScorerParams::init(&[2 * feature_dim, cfg.trunk_dim], cfg.activation, true, rng)?;
        let head = ScorerParams::init(
            &[2 * cfg.trunk_dim, cfg.head_hidden, 1],
            cfg.activation,
            false,
            rng,
        )?;
        Ok(Self { trunk, head })
    }

    pub fn reward(&self, initial: &StateEncoding, candidate: &StateEncoding) -> Result<f64> {
        let mut joint = self.trunk.predict(initial.as_slice())?;
        joint.extend(self.trunk.predict(candidate.as_slice())?);
        Ok(self.head.predict(&joint)?[0])
    }

    pub fn reward_node(
        &self,
        tape: &mut Tape<'_>,
        slots: (ParamSlot, ParamSlot),
        initial: &StateEncoding,
        candidate: &StateEncoding,
    ) -> Result<NodeId> {
        let a = tape.leaf(initial.as_slice().to_vec());
        let ta = self.trunk.forward_node(tape, slots.0, a)?;
        let b = tape.leaf(candidate.as_slice().to_vec());
        let tb = self.trunk.forward_node(tape, slots.0, b)?;
        let joint = tape.concat(&[ta, tb]);
        self.head.forward_node(tape, slots.1, joint)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, Self::KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, Self::KIND)
    }
}

/// State value `V(s) = head(trunk(s))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticModel {
    pub trunk: ScorerParams,
    pub head: ScorerParams,
}

impl CriticModel {
    pub const KIND: &'static str = "critic";

    pub fn value(&self, state: &StateEncoding) -> Result<f64> {
        let t = self.trunk.predict(state.as_slice())?;
        Ok(self.head.predict(&t)?[0])
    }

    pub fn value_node(
        &self,
        tape: &mut Tape<'_>,
        slots: (ParamSlot, ParamSlot),
        state: &StateEncoding,
    ) -> Result<NodeId> {
        let s = tape.leaf(state.as_slice().to_vec());
        let t = self.trunk.forward_node(tape, slots.0, s)?;
        self.head.forward_node(tape, slots.1, t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, Self::KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, Self::KIND)
    }
}

/// Critic whose trunk is a deep copy of the reward trunk (fresh optimizer
/// state) and whose value head is newly initialised from `rng`.
pub fn init_critic_from_reward<R: Rng + ?Sized>(
    reward: &RewardModel,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<CriticModel> {
    let trunk = ScorerParams::from_layers(
        reward.trunk.layers().to_vec(),
        reward.trunk.activation(),
        reward.trunk.activate_output(),
    )?;
    let head = ScorerParams::init_scaled(
        &[trunk.output_width(), 1],
        cfg.activation,
        false,
        cfg.value_head_scale,
        rng,
    )?;
    Ok(CriticModel { trunk, head })
}
