use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::pairs::{
    all_pairs, annotated_pair_count, check_proportion, graded_pairs, instance_rng,
    sample_pair_annotations, PairSample, UnorderedPair,
};
use super::RankingInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Fraction of each target instance's pairs that carry a preference.
    pub annotation_proportion: f64,
    /// Fraction of each target instance's pairs used, unannotated, in stage 3.
    pub stage3_pair_fraction: f64,
    /// Fraction of target instances held out for testing.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            annotation_proportion: 0.1,
            stage3_pair_fraction: 0.4,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Everything the three training stages and the final evaluation consume.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    /// Graded source instances (stage 1, and the pool for augmented pairs).
    pub source: Vec<RankingInstance>,
    /// Target training instances with their grades removed.
    pub target_train: Vec<RankingInstance>,
    /// Annotated target pairs for stage 2.
    pub stage2_target_pairs: Vec<PairSample>,
    /// Source pairs oriented by source grades, as many as the target pairs.
    pub stage2_source_pairs: Vec<PairSample>,
    /// Unannotated target pairs for stage 3.
    pub stage3_pairs: Vec<UnorderedPair>,
    /// Graded target instances never seen in training.
    pub test: Vec<RankingInstance>,
    pub config: SplitConfig,
}

impl DatasetSplit {
    pub fn stage2_pairs(&self) -> Vec<PairSample> {
        self.stage2_target_pairs
            .iter()
            .chain(&self.stage2_source_pairs)
            .cloned()
            .collect()
    }

    pub fn manifest(&self) -> SplitManifest {
        let ids = |v: &[RankingInstance]| v.iter().map(|i| i.instance_id.clone()).collect();
        SplitManifest {
            source_ids: ids(&self.source),
            target_train_ids: ids(&self.target_train),
            test_ids: ids(&self.test),
            annotation_proportion: self.config.annotation_proportion,
            stage3_pair_fraction: self.config.stage3_pair_fraction,
            test_fraction: self.config.test_fraction,
            seed: self.config.seed,
            stage2_target_pairs: self.stage2_target_pairs.len(),
            stage2_source_pairs: self.stage2_source_pairs.len(),
            stage3_pairs: self.stage3_pairs.len(),
        }
    }
}

/// JSON summary of a split: which instance ids went where, and the knobs used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub source_ids: Vec<String>,
    pub target_train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub annotation_proportion: f64,
    pub stage3_pair_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stage2_target_pairs: usize,
    pub stage2_source_pairs: usize,
    pub stage3_pairs: usize,
}

const TEST_SALT: u64 = 0x7E57;
const AUGMENT_SALT: u64 = 0xA06;
const STAGE3_SALT: u64 = 0x57A6E3;

pub fn build_splits(
    source: &[RankingInstance],
    target: &[RankingInstance],
    cfg: &SplitConfig,
) -> Result<DatasetSplit> {
    check_proportion(cfg.annotation_proportion, "annotation_proportion")?;
    check_proportion(cfg.stage3_pair_fraction, "stage3_pair_fraction")?;
    if !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(Error::config("test_fraction must lie in [0, 1)"));
    }
    let source_ids: HashSet<&str> = source.iter().map(|i| i.instance_id.as_str()).collect();
    let mut target_ids = HashSet::new();
    for inst in target {
        if source_ids.contains(inst.instance_id.as_str()) {
            return Err(Error::data(format!(
                "instance id {:?} appears in both source and target",
                inst.instance_id
            )));
        }
        if !target_ids.insert(inst.instance_id.as_str()) {
            return Err(Error::data(format!("duplicate target id {:?}", inst.instance_id)));
        }
    }
    if source_ids.len() != source.len() {
        return Err(Error::data("duplicate source instance ids"));
    }

    // The test split is carved first so no pair sampling ever touches it.
    let n_test = ((cfg.test_fraction * target.len() as f64).round() as usize)
        .min(target.len().saturating_sub(1));
    let mut perm: Vec<usize> = (0..target.len()).collect();
    perm.shuffle(&mut instance_rng(cfg.seed, TEST_SALT, 0));
    let test_set: HashSet<usize> = perm[..n_test].iter().copied().collect();
    let test: Vec<RankingInstance> = (0..target.len())
        .filter(|i| test_set.contains(i))
        .map(|i| target[i].clone())
        .collect();
    let train_graded: Vec<RankingInstance> = (0..target.len())
        .filter(|i| !test_set.contains(i))
        .map(|i| target[i].clone())
        .collect();

    let stage2_target_pairs =
        sample_pair_annotations(&train_graded, cfg.annotation_proportion, cfg.seed)?;

    let mut pool = Vec::new();
    for inst in source {
        pool.extend(graded_pairs(inst)?);
    }
    pool.shuffle(&mut instance_rng(cfg.seed, AUGMENT_SALT, 0));
    pool.truncate(stage2_target_pairs.len());
    let stage2_source_pairs = pool;

    let mut stage3_pairs = Vec::new();
    for (k, inst) in train_graded.iter().enumerate() {
        let mut pairs = all_pairs(inst.item_count());
        pairs.shuffle(&mut instance_rng(cfg.seed, STAGE3_SALT, k));
        let take = annotated_pair_count(cfg.stage3_pair_fraction, inst.item_count());
        stage3_pairs.extend(pairs.into_iter().take(take).map(|(first, second)| UnorderedPair {
            instance_id: inst.instance_id.clone(),
            first,
            second,
        }));
    }

    Ok(DatasetSplit {
        source: source.to_vec(),
        target_train: train_graded.iter().map(RankingInstance::without_grades).collect(),
        stage2_target_pairs,
        stage2_source_pairs,
        stage3_pairs,
        test,
        config: cfg.clone(),
    })
}
