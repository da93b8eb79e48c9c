use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{PpoConfig, RatioMode};
use super::graph::{self, LossNodes};
use super::losses::LossWeights;
use super::trajectory::{PairAction, TrajectoryRecord};
use crate::autodiff::{adam_step, AdamConfig, NodeId, ParamSlot, Tape};
use crate::error::{Error, Result};
use crate::models::{ActorModel, CriticModel};

/// The recorded loss graph for one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct MinibatchGraph {
    pub total: NodeId,
    pub parts: LossNodes,
    pub actor: ParamSlot,
    pub critic: (ParamSlot, ParamSlot),
    /// `mean|Â| · (m + max|p1 − p2|)` over the batch.
    pub policy_bound: f64,
}

/// Records the joint loss of `batch` under the current actor and critic.
pub fn build_minibatch_loss<'p>(
    tape: &mut Tape<'p>,
    actor: &'p ActorModel,
    critic: &'p CriticModel,
    batch: &[&TrajectoryRecord],
    cfg: &PpoConfig,
) -> Result<MinibatchGraph> {
    let actor_slot = tape.bind(&actor.params);
    let critic_slots = (tape.bind(&critic.trunk), tape.bind(&critic.head));
    let mut ratios = Vec::with_capacity(batch.len());
    let mut dists = Vec::with_capacity(batch.len());
    let mut values = Vec::with_capacity(batch.len());
    let mut max_gap = 0.0_f64;
    for rec in batch {
        let pa = actor.score_node(tape, actor_slot, rec.state.first())?;
        let pb = actor.score_node(tape, actor_slot, rec.state.second())?;
        let dist = graph::policy_dist_node(tape, pa, pb, cfg.temperature);
        let ratio = match cfg.ratio_mode {
            RatioMode::PartialOrder => {
                // Scores in the order the sampled action placed the items.
                let (first, second) = match rec.action {
                    PairAction::Keep => (pa, pb),
                    PairAction::Swap => (pb, pa),
                };
                max_gap = max_gap.max((tape.scalar_value(first) - tape.scalar_value(second)).abs());
                graph::partial_order_ratio_node(tape, first, second, rec.advantage, cfg.delta, cfg.margin)?
            }
            RatioMode::Original | RatioMode::OriginalClipped => {
                let prob = tape.select(dist, rec.action.index())?;
                graph::original_ratio_node(tape, prob, rec.old_prob)?
            }
        };
        ratios.push(ratio);
        dists.push(dist);
        values.push(critic.value_node(tape, critic_slots, &rec.state)?);
    }
    let advantages: Vec<f64> = batch.iter().map(|r| r.advantage).collect();
    let targets: Vec<f64> = batch.iter().map(|r| r.target).collect();
    let old: Vec<[f64; 2]> = batch.iter().map(|r| r.old_dist).collect();
    let policy = match cfg.ratio_mode {
        RatioMode::PartialOrder | RatioMode::Original => graph::policy_loss_partial_node(tape, &ratios, &advantages)?,
        RatioMode::OriginalClipped => graph::clipped_policy_loss_node(tape, &ratios, &advantages, cfg.clip_epsilon)?,
    };
    let parts = LossNodes {
        policy,
        value: graph::value_loss_node(tape, &values, &targets)?,
        entropy: graph::entropy_node(tape, &dists)?,
        kl: graph::kl_node(tape, &old, &dists)?,
    };
    let total = graph::total_loss_node(tape, parts, loss_weights(cfg), cfg.kl_placement)?;
    let mean_abs_adv = advantages.iter().map(|a| a.abs()).sum::<f64>() / advantages.len() as f64;
    Ok(MinibatchGraph {
        total,
        parts,
        actor: actor_slot,
        critic: critic_slots,
        policy_bound: mean_abs_adv * (cfg.margin + max_gap),
    })
}

pub fn loss_weights(cfg: &PpoConfig) -> LossWeights {
    LossWeights {
        value: cfg.c1,
        entropy: cfg.c2,
        kl: cfg.c3,
    }
}

/// Scalar summary of one collect-and-update round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub mean_reward: f64,
    pub mean_advantage: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub total_loss: f64,
    pub gradient_steps: usize,
    /// Largest `|L_policy| / bound` seen over the minibatches (partial-order mode).
    pub policy_bound_ratio: f64,
    pub policy_bound_held: bool,
}

/// K epochs of shuffled minibatch AdamW updates on actor and critic.
///
/// `records.len() / minibatch` full minibatches are used per epoch; any
/// remainder after shuffling is skipped for that epoch.
pub fn ppo_iteration<R: Rng + ?Sized>(
    iteration: usize,
    records: &[TrajectoryRecord],
    actor: &mut ActorModel,
    critic: &mut CriticModel,
    cfg: &PpoConfig,
    optimizer: &AdamConfig,
    rng: &mut R,
) -> Result<IterationDiagnostics> {
    cfg.validate()?;
    if records.len() < cfg.minibatch {
        return Err(Error::invalid(format!(
            "{} records is fewer than one minibatch of {}",
            records.len(),
            cfg.minibatch
        )));
    }
    let n = records.len() as f64;
    let mut diag = IterationDiagnostics {
        iteration,
        mean_reward: records.iter().map(|r| r.reward).sum::<f64>() / n,
        mean_advantage: records.iter().map(|r| r.advantage).sum::<f64>() / n,
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        kl: 0.0,
        total_loss: 0.0,
        gradient_steps: 0,
        policy_bound_ratio: 0.0,
        policy_bound_held: true,
    };
    let num_batches = records.len() / cfg.minibatch;
    let mut order: Vec<usize> = (0..records.len()).collect();
    for _ in 0..cfg.k_epochs {
        order.shuffle(rng);
        for b in 0..num_batches {
            let batch: Vec<&TrajectoryRecord> = order[b * cfg.minibatch..(b + 1) * cfg.minibatch]
                .iter()
                .map(|&i| &records[i])
                .collect();
            let (values, grads, slots) = {
                let mut tape = Tape::new();
                let g = build_minibatch_loss(&mut tape, actor, critic, &batch, cfg)?;
                let values = [
                    tape.scalar_value(g.parts.policy),
                    tape.scalar_value(g.parts.value),
                    tape.scalar_value(g.parts.entropy),
                    tape.scalar_value(g.parts.kl),
                    tape.scalar_value(g.total),
                    g.policy_bound,
                ];
                if !values[4].is_finite() {
                    return Err(Error::NonFinite(format!(
                        "ppo loss at iteration {iteration}, step {}: {diag:?}",
                        diag.gradient_steps
                    )));
                }
                (values, tape.backward(g.total, &[1.0])?, (g.actor, g.critic))
            };
            adam_step(&mut actor.params, grads.param(slots.0), optimizer)?;
            adam_step(&mut critic.trunk, grads.param(slots.1 .0), optimizer)?;
            adam_step(&mut critic.head, grads.param(slots.1 .1), optimizer)?;

            let [policy, value, entropy, kl, total, bound] = values;
            diag.policy_loss += policy;
            diag.value_loss += value;
            diag.entropy += entropy;
            diag.kl += kl;
            diag.total_loss += total;
            diag.gradient_steps += 1;
            if cfg.ratio_mode == RatioMode::PartialOrder {
                let ratio = if bound > 0.0 { policy.abs() / bound } else { 0.0 };
                diag.policy_bound_ratio = diag.policy_bound_ratio.max(ratio);
                diag.policy_bound_held &= policy.abs() <= bound * (1.0 + 1e-12) + 1e-15;
            }
        }
    }
    let steps = diag.gradient_steps as f64;
    diag.policy_loss /= steps;
    diag.value_loss /= steps;
    diag.entropy /= steps;
    diag.kl /= steps;
    diag.total_loss /= steps;
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_critic_from_reward, ModelConfig, RewardModel, StateEncoding};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(k: usize, rng: &mut ChaCha8Rng) -> TrajectoryRecord {
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let keep = rng.random_range(0.2..0.8);
        let action = if k.is_multiple_of(2) { PairAction::Keep } else { PairAction::Swap };
        let reward = rng.random_range(-1.0..1.0);
        let old_value = rng.random_range(-0.5..0.5);
        TrajectoryRecord {
            instance_id: "q".into(),
            step: 0,
            indices: (0, 1),
            state: StateEncoding::new(&a, &b).unwrap(),
            action,
            reward,
            old_prob: if action == PairAction::Keep { keep } else { 1.0 - keep },
            old_dist: [keep, 1.0 - keep],
            old_value,
            terminal_old_value: 0.0,
            target: reward,
            advantage: reward - old_value,
        }
    }

    fn models() -> (ActorModel, CriticModel) {
        let cfg = ModelConfig { actor_hidden: 6, trunk_dim: 6, head_hidden: 6, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let actor = ActorModel::new(4, &cfg, &mut rng).unwrap();
        let reward = RewardModel::new(4, &cfg, &mut rng).unwrap();
        let critic = init_critic_from_reward(&reward, &cfg, &mut rng).unwrap();
        (actor, critic)
    }

    #[test]
    fn full_batch_single_epoch_is_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let recs: Vec<_> = (0..12).map(|k| record(k, &mut rng)).collect();
        let (mut actor, mut critic) = models();
        let cfg = PpoConfig { n_trajs: 12, minibatch: 12, ..Default::default() };
        let d = ppo_iteration(0, &recs, &mut actor, &mut critic, &cfg, &AdamConfig::new(1e-3), &mut rng).unwrap();
        assert_eq!(d.gradient_steps, 1);
        assert_eq!(actor.params.step(), 1);
        assert_eq!(critic.head.step(), 1);
        assert!(d.policy_bound_held);
    }

    #[test]
    fn diagnostics_are_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let recs: Vec<_> = (0..30).map(|k| record(k, &mut rng)).collect();
            let (mut actor, mut critic) = models();
            let cfg = PpoConfig { n_trajs: 30, minibatch: 8, k_epochs: 2, ..Default::default() };
            let d = ppo_iteration(3, &recs, &mut actor, &mut critic, &cfg, &AdamConfig::new(1e-3), &mut rng)
                .unwrap();
            (d, actor)
        };
        let (a, actor_a) = run();
        let (b, actor_b) = run();
        assert_eq!(a, b);
        assert_eq!(actor_a, actor_b);
        assert_eq!(a.gradient_steps, 6);
    }

    #[test]
    fn satisfied_margin_contributes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rec = record(0, &mut rng);
        rec.advantage = 1.0;
        let (actor, critic) = models();
        let pa = actor.score(rec.state.first()).unwrap();
        let pb = actor.score(rec.state.second()).unwrap();
        // margin small enough that whichever item leads already satisfies it
        let gap = (pa - pb).abs();
        rec.action = if pa >= pb { PairAction::Keep } else { PairAction::Swap };
        let cfg = PpoConfig { margin: gap * 0.5, n_trajs: 1, minibatch: 1, ..Default::default() };
        let mut tape = Tape::new();
        let g = build_minibatch_loss(&mut tape, &actor, &critic, &[&rec], &cfg).unwrap();
        assert_eq!(tape.scalar_value(g.parts.policy), 0.0);
    }

    #[test]
    fn too_few_records_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let recs: Vec<_> = (0..3).map(|k| record(k, &mut rng)).collect();
        let (mut actor, mut critic) = models();
        let cfg = PpoConfig::default();
        assert!(ppo_iteration(0, &recs, &mut actor, &mut critic, &cfg, &AdamConfig::default(), &mut rng).is_err());
    }
}
