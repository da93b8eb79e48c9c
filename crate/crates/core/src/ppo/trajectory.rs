use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{KlPlacement, PpoConfig};
use super::losses;
use crate::data::UnorderedPair;
use crate::error::{Error, Result};
use crate::eval::InstanceIndex;
use crate::models::{actor_scores, policy_distribution, ActorModel, CriticModel, RewardModel, StateEncoding};

/// Keep the pair as presented, or swap it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairAction {
    #[serde(rename = "order12")]
    Keep,
    #[serde(rename = "order21")]
    Swap,
}

impl PairAction {
    /// Position in the policy distribution.
    pub fn index(self) -> usize {
        match self {
            PairAction::Keep => 0,
            PairAction::Swap => 1,
        }
    }

    pub fn apply(self, state: &StateEncoding) -> StateEncoding {
        match self {
            PairAction::Keep => state.clone(),
            PairAction::Swap => state.swapped(),
        }
    }

    pub fn apply_indices(self, (a, b): (usize, usize)) -> (usize, usize) {
        match self {
            PairAction::Keep => (a, b),
            PairAction::Swap => (b, a),
        }
    }
}

/// One environment step as seen by the policy that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub instance_id: String,
    pub step: usize,
    /// Item indices in state order.
    pub indices: (usize, usize),
    pub state: StateEncoding,
    pub action: PairAction,
    /// Reward after any KL adjustment.
    pub reward: f64,
    pub old_prob: f64,
    pub old_dist: [f64; 2],
    pub old_value: f64,
    pub terminal_old_value: f64,
    pub target: f64,
    pub advantage: f64,
}

/// Models used while collecting, all read-only.
#[derive(Debug, Clone, Copy)]
pub struct RolloutModels<'a> {
    pub actor: &'a ActorModel,
    pub reward: &'a RewardModel,
    pub critic: &'a CriticModel,
    /// Policy the KL reward adjustment is measured against.
    pub reference: Option<&'a ActorModel>,
}

/// Runs `cfg.n_trajs` trajectories of `cfg.horizon` steps each.
///
/// Trajectory `k` draws from its own ChaCha stream `k` under `stream_seed`,
/// so the output does not depend on the number of worker threads.
pub fn collect_trajectories(
    models: RolloutModels<'_>,
    pairs: &[UnorderedPair],
    index: &InstanceIndex<'_>,
    cfg: &PpoConfig,
    stream_seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs to collect trajectories from"));
    }
    cfg.validate()?;
    let per_traj: Vec<Vec<TrajectoryRecord>> = (0..cfg.n_trajs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
            rng.set_stream(k as u64);
            run_trajectory(models, pairs, index, cfg, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(per_traj.into_iter().flatten().collect())
}

fn run_trajectory(
    models: RolloutModels<'_>,
    pairs: &[UnorderedPair],
    index: &InstanceIndex<'_>,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrajectoryRecord>> {
    let pair = &pairs[rng.random_range(0..pairs.len())];
    let initial = StateEncoding::new(
        index.features(&pair.instance_id, pair.first)?,
        index.features(&pair.instance_id, pair.second)?,
    )?;
    let mut state = initial.clone();
    let mut indices = (pair.first, pair.second);
    let mut records = Vec::with_capacity(cfg.horizon);
    for step in 0..cfg.horizon {
        let (p1, p2) = actor_scores(models.actor, &state)?;
        let dist = policy_distribution(p1, p2, cfg.temperature)?;
        let action = if rng.random::<f64>() < dist[0] {
            PairAction::Keep
        } else {
            PairAction::Swap
        };
        let next = action.apply(&state);
        let mut reward = models.reward.reward(&initial, &next)?;
        if cfg.kl_placement == KlPlacement::SubtractedFromReward {
            if let Some(reference) = models.reference {
                let (q1, q2) = actor_scores(reference, &state)?;
                let ref_dist = policy_distribution(q1, q2, cfg.temperature)?;
                reward -= cfg.c3 * losses::kl_penalty(&[ref_dist], &[dist])?;
            }
        }
        records.push(TrajectoryRecord {
            instance_id: pair.instance_id.clone(),
            step,
            indices,
            state: state.clone(),
            action,
            reward,
            old_prob: dist[action.index()],
            old_dist: dist,
            old_value: models.critic.value(&state)?,
            terminal_old_value: 0.0,
            target: 0.0,
            advantage: 0.0,
        });
        indices = action.apply_indices(indices);
        state = next;
    }
    let terminal = models.critic.value(&state)?;
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    for (t, rec) in records.iter_mut().enumerate() {
        rec.terminal_old_value = terminal;
        rec.target = losses::target_value(&rewards[t..], cfg.gamma, terminal)?;
        rec.advantage = losses::advantage(rec.target, rec.old_value);
    }
    Ok(records)
}
