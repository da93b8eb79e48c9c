//! Stage 1 (per-item regression on source grades) and stage 2 (pairwise
//! reward model).

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::autodiff::{adam_step, Tape};
use crate::data::{DatasetSplit, PairSample, RankingInstance};
use crate::error::{Error, Result};
use crate::eval::{mean_ndcg, reward_accuracy, InstanceIndex, NDCG_KS};
use crate::models::{ActorModel, RewardModel, StateEncoding};
use crate::ppo::graph::{mean_of, reward_margin_node, smooth_l1_node};

const STAGE1_SALT: u64 = 0x5_7A6E_0001;
const STAGE2_SALT: u64 = 0x5_7A6E_0002;

pub(crate) fn stage_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Epoch {
    /// 0 is the untrained actor.
    pub epoch: usize,
    pub train_loss: Option<f64>,
    /// Validation NDCG@{1,3,5,10,20}.
    pub val_ndcg: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Outcome {
    pub actor: ActorModel,
    pub history: Vec<Stage1Epoch>,
}

fn ndcg_array(v: Vec<f64>) -> [f64; 5] {
    [v[0], v[1], v[2], v[3], v[4]]
}

fn check_loss(loss: f64, what: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} loss")))
    }
}

/// Trains a fresh actor to regress source grades with smooth L1.
pub fn run_stage1(cfg: &ExperimentConfig, source: &[RankingInstance], seed: u64) -> Result<Stage1Outcome> {
    cfg.validate()?;
    let dim = crate::data::validate_instances(source)?;
    for inst in source {
        inst.grades()?;
    }
    let mut rng = stage_rng(seed, STAGE1_SALT);
    let mut actor = ActorModel::new(dim, &cfg.model, &mut rng)?;

    let mut order: Vec<usize> = (0..source.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((cfg.val_fraction * source.len() as f64).round() as usize).min(source.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let train: Vec<&RankingInstance> = train_idx.iter().map(|&i| &source[i]).collect();
    // With no held-out instances the training set doubles as validation.
    let val: Vec<RankingInstance> = if val_idx.is_empty() {
        train.iter().map(|i| (*i).clone()).collect()
    } else {
        val_idx.iter().map(|&i| source[i].clone()).collect()
    };

    let items: Vec<(&[f64], f64)> = train
        .iter()
        .flat_map(|inst| inst.items.iter())
        .map(|it| (it.features.as_slice(), f64::from(it.relevance.unwrap_or_default())))
        .collect();

    let optimizer = cfg.stage1_optimizer();
    let validate = |actor: &ActorModel| -> Result<[f64; 5]> {
        Ok(ndcg_array(mean_ndcg(&val, &NDCG_KS, |it| actor.score(&it.features))?))
    };
    let mut history = vec![Stage1Epoch { epoch: 0, train_loss: None, val_ndcg: validate(&actor)? }];
    let mut perm: Vec<usize> = (0..items.len()).collect();
    for epoch in 1..=cfg.stage1.epochs {
        perm.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in perm.chunks(cfg.stage1.batch_size) {
            let (loss, grads, slot) = {
                let mut tape = Tape::new();
                let slot = tape.bind(&actor.params);
                let mut terms = Vec::with_capacity(chunk.len());
                for &k in chunk {
                    let (x, y) = items[k];
                    let p = actor.score_node(&mut tape, slot, x)?;
                    terms.push(smooth_l1_node(&mut tape, p, y, cfg.stage1.beta)?);
                }
                let loss = mean_of(&mut tape, &terms)?;
                let value = tape.scalar_value(loss);
                check_loss(value, "stage-1")?;
                (value, tape.backward(loss, &[1.0])?, slot)
            };
            adam_step(&mut actor.params, grads.param(slot), &optimizer)?;
            total += loss;
            batches += 1;
        }
        history.push(Stage1Epoch {
            epoch,
            train_loss: Some(total / batches as f64),
            val_ndcg: validate(&actor)?,
        });
    }
    Ok(Stage1Outcome { actor, history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Epoch {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub train_accuracy: f64,
    /// Accuracy on the held-back annotated pairs, when any were held back.
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    /// The model from `best_epoch`.
    pub reward: RewardModel,
    pub best_epoch: usize,
    pub history: Vec<Stage2Epoch>,
}

/// Annotated pairs divided into training pairs and the pairs used to pick
/// the epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Pairs {
    pub train: Vec<PairSample>,
    pub val: Vec<PairSample>,
}

/// Holds back every annotated pair of a random `val_fraction` of the
/// annotated target instances. Source pairs always train.
pub fn stage2_pairs(split: &DatasetSplit, val_fraction: f64, rng: &mut ChaCha8Rng) -> Stage2Pairs {
    let mut ids: Vec<&str> = Vec::new();
    for p in &split.stage2_target_pairs {
        if !ids.contains(&p.instance_id.as_str()) {
            ids.push(&p.instance_id);
        }
    }
    ids.shuffle(rng);
    let n_val = ((val_fraction * ids.len() as f64).round() as usize).min(ids.len().saturating_sub(1));
    let held: HashSet<&str> = ids[..n_val].iter().copied().collect();
    let (val, target_train): (Vec<PairSample>, Vec<PairSample>) = split
        .stage2_target_pairs
        .iter()
        .cloned()
        .partition(|p| held.contains(p.instance_id.as_str()));
    let train = target_train.into_iter().chain(split.stage2_source_pairs.iter().cloned()).collect();
    Stage2Pairs { train, val }
}

type PreferenceStates = (StateEncoding, StateEncoding, StateEncoding);

fn preference_states(index: &InstanceIndex<'_>, pairs: &[PairSample]) -> Result<Vec<PreferenceStates>> {
    pairs
        .iter()
        .map(|p| {
            let (initial, correct) = index.preference_states(p)?;
            let flipped = correct.swapped();
            Ok((initial, correct, flipped))
        })
        .collect()
}

/// Trains a fresh reward model on the split's oriented stage-2 pairs and
/// keeps the epoch with the best accuracy on the held-back pairs.
pub fn run_stage2(cfg: &ExperimentConfig, split: &DatasetSplit, seed: u64) -> Result<Stage2Outcome> {
    cfg.validate()?;
    let mut rng = stage_rng(seed, STAGE2_SALT);
    let pairs = stage2_pairs(split, cfg.stage2.val_fraction, &mut rng);
    if pairs.train.is_empty() {
        return Err(Error::data("stage 2 needs at least one annotated pair"));
    }
    let index = InstanceIndex::new(split.source.iter().chain(&split.target_train));
    let states = preference_states(&index, &pairs.train)?;
    let dim = states[0].0.feature_dim();

    let mut reward = RewardModel::new(dim, &cfg.model, &mut rng)?;
    let optimizer = cfg.stage2_optimizer();
    let val_accuracy = |reward: &RewardModel| -> Result<Option<f64>> {
        if pairs.val.is_empty() {
            Ok(None)
        } else {
            reward_accuracy(reward, &pairs.val, &index).map(Some)
        }
    };
    let mut history = vec![Stage2Epoch {
        epoch: 0,
        train_loss: None,
        train_accuracy: reward_accuracy(&reward, &pairs.train, &index)?,
        val_accuracy: val_accuracy(&reward)?,
    }];
    let mut best = (history[0].val_accuracy, 0, reward.clone());
    let mut perm: Vec<usize> = (0..states.len()).collect();
    for epoch in 1..=cfg.stage2.epochs {
        perm.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in perm.chunks(cfg.stage2.batch_size) {
            let (loss, grads, slots) = {
                let mut tape = Tape::new();
                let slots = (tape.bind(&reward.trunk), tape.bind(&reward.head));
                let mut terms = Vec::with_capacity(chunk.len());
                for &k in chunk {
                    let (initial, correct, flipped) = &states[k];
                    let good = reward.reward_node(&mut tape, slots, initial, correct)?;
                    let bad = reward.reward_node(&mut tape, slots, initial, flipped)?;
                    terms.push(reward_margin_node(&mut tape, good, bad, cfg.stage2.margin)?);
                }
                let loss = mean_of(&mut tape, &terms)?;
                let value = tape.scalar_value(loss);
                check_loss(value, "stage-2")?;
                (value, tape.backward(loss, &[1.0])?, slots)
            };
            adam_step(&mut reward.trunk, grads.param(slots.0), &optimizer)?;
            adam_step(&mut reward.head, grads.param(slots.1), &optimizer)?;
            total += loss;
            batches += 1;
        }
        let val = val_accuracy(&reward)?;
        // Without held-back pairs the latest epoch wins; otherwise strictly better only.
        if val.is_none() || val > best.0 {
            best = (val, epoch, reward.clone());
        }
        history.push(Stage2Epoch {
            epoch,
            train_loss: Some(total / batches as f64),
            train_accuracy: reward_accuracy(&reward, &pairs.train, &index)?,
            val_accuracy: val,
        });
    }
    let (_, best_epoch, reward) = best;
    Ok(Stage2Outcome { reward, best_epoch, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetSplit, LabeledItem, SyntheticConfig};
    use crate::pipeline::config::DataSource;
    use crate::pipeline::prepare::prepare_data;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            data: DataSource::Synthetic {
                generator: SyntheticConfig { items_per_instance: 8, feature_dim: 8, ..Default::default() },
                n_source: 20,
                n_target: 10,
            },
            ..Default::default()
        };
        cfg.model.actor_hidden = 8;
        cfg.model.trunk_dim = 8;
        cfg.model.head_hidden = 8;
        cfg.stage1.epochs = 3;
        cfg.stage2.epochs = 3;
        cfg
    }

    #[test]
    fn stage1_overfits_a_tiny_instance() {
        let inst = RankingInstance {
            instance_id: "q".into(),
            items: vec![
                LabeledItem { item_id: "a".into(), features: vec![1.0, 0.0, 0.5], relevance: Some(2) },
                LabeledItem { item_id: "b".into(), features: vec![0.0, 1.0, -0.5], relevance: Some(0) },
            ],
        };
        let mut cfg = small_cfg();
        cfg.stage1.epochs = 400;
        cfg.stage1.lr = 1e-2;
        cfg.stage1.weight_decay = 0.0;
        let out = run_stage1(&cfg, &[inst], 0).unwrap();
        let last = out.history.last().unwrap().train_loss.unwrap();
        assert!(last < 1e-3, "final loss {last}");
        assert_eq!(out.history.len(), 401);
    }

    #[test]
    fn stage1_is_deterministic() {
        let cfg = small_cfg();
        let data = prepare_data(&cfg, 0).unwrap();
        let a = run_stage1(&cfg, &data.split.source, 0).unwrap();
        let b = run_stage1(&cfg, &data.split.source, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stage1_rejects_ungraded_items() {
        let cfg = small_cfg();
        let data = prepare_data(&cfg, 0).unwrap();
        assert!(run_stage1(&cfg, &data.split.target_train, 0).is_err());
    }

    #[test]
    fn stage2_is_deterministic_and_learns() {
        let cfg = small_cfg();
        let data = prepare_data(&cfg, 0).unwrap();
        let a = run_stage2(&cfg, &data.split, 0).unwrap();
        let b = run_stage2(&cfg, &data.split, 0).unwrap();
        assert_eq!(a, b);
        let first = a.history.first().unwrap().train_accuracy;
        let last = a.history.last().unwrap().train_accuracy;
        assert!(last > first, "{first} -> {last}");
    }

    #[test]
    fn held_back_pairs_cover_whole_instances() {
        let cfg = small_cfg();
        let data = prepare_data(&cfg, 0).unwrap();
        let pairs = stage2_pairs(&data.split, 0.3, &mut stage_rng(0, STAGE2_SALT));
        let held: HashSet<&str> = pairs.val.iter().map(|p| p.instance_id.as_str()).collect();
        assert_eq!(held.len(), 2);
        assert!(pairs.train.iter().all(|p| !held.contains(p.instance_id.as_str())));
        assert_eq!(pairs.train.len() + pairs.val.len(), data.split.stage2_pairs().len());
    }

    #[test]
    fn best_epoch_has_the_top_val_accuracy() {
        let cfg = small_cfg();
        let data = prepare_data(&cfg, 1).unwrap();
        let out = run_stage2(&cfg, &data.split, 1).unwrap();
        let best = out.history[out.best_epoch].val_accuracy.unwrap();
        let first_max = out.history.iter().position(|e| e.val_accuracy.unwrap() == best).unwrap();
        assert!(out.history.iter().all(|e| e.val_accuracy.unwrap() <= best));
        assert_eq!(first_max, out.best_epoch);
    }

    #[test]
    fn without_held_back_pairs_the_last_epoch_is_kept() {
        let mut cfg = small_cfg();
        cfg.stage2.val_fraction = 0.0;
        let data = prepare_data(&cfg, 0).unwrap();
        let out = run_stage2(&cfg, &data.split, 0).unwrap();
        assert_eq!(out.best_epoch, cfg.stage2.epochs);
        assert!(out.history.iter().all(|e| e.val_accuracy.is_none()));
    }

    #[test]
    fn stage2_rejects_empty_pairs() {
        let cfg = small_cfg();
        let data = prepare_data(&cfg, 0).unwrap();
        let empty = DatasetSplit {
            stage2_target_pairs: vec![],
            stage2_source_pairs: vec![],
            ..data.split
        };
        assert!(matches!(run_stage2(&cfg, &empty, 0), Err(Error::Data(_))));
    }
}
