//! Ranking instances, LETOR I/O, synthetic transfer datasets and pair sampling.

mod letor;
mod pairs;
mod splits;
mod synthetic;

pub use letor::{parse_letor, parse_letor_with, serialize_letor, GradeMapping, ParsedLetor};
pub use pairs::{
    all_pairs, annotated_pair_count, graded_pairs, sample_pair_annotations, PairSample, UnorderedPair,
};
pub use splits::{build_splits, DatasetSplit, SplitConfig, SplitManifest};
pub use synthetic::{generate_synthetic, generate_transfer_pair, Domain, SyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_GRADE: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub item_id: String,
    pub features: Vec<f64>,
    /// 0 = low, 1 = medium, 2 = high relevance.
    pub relevance: Option<u8>,
}

/// One query or clip with its candidate labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingInstance {
    pub instance_id: String,
    pub items: Vec<LabeledItem>,
}

impl RankingInstance {
    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.items.first().map(|i| i.features.len())
    }

    /// All grades, or an error naming the first ungraded item.
    pub fn grades(&self) -> Result<Vec<u8>> {
        self.items
            .iter()
            .map(|it| {
                it.relevance.ok_or_else(|| {
                    Error::data(format!(
                        "item {:?} of instance {:?} has no relevance grade",
                        it.item_id, self.instance_id
                    ))
                })
            })
            .collect()
    }

    /// A copy with every relevance grade removed.
    pub fn without_grades(&self) -> Self {
        Self {
            instance_id: self.instance_id.clone(),
            items: self
                .items
                .iter()
                .map(|it| LabeledItem {
                    relevance: None,
                    ..it.clone()
                })
                .collect(),
        }
    }

    /// Keeps the first `target_count` items, or repeats items cyclically
    /// (marking the copies) until there are `target_count`.
    pub fn pad_or_truncate(&self, target_count: usize) -> Result<Self> {
        if target_count < 2 {
            return Err(Error::invalid("target_count must be at least 2"));
        }
        if self.items.is_empty() {
            return Err(Error::data(format!("instance {:?} has no items", self.instance_id)));
        }
        let n = self.items.len();
        let items = (0..target_count)
            .map(|k| {
                let src = &self.items[k % n];
                if k < n {
                    src.clone()
                } else {
                    LabeledItem {
                        item_id: format!("{}#dup{}", src.item_id, k / n),
                        ..src.clone()
                    }
                }
            })
            .collect();
        Ok(Self {
            instance_id: self.instance_id.clone(),
            items,
        })
    }
}

/// Checks the dataset-level invariants: at least two items per instance,
/// one feature width throughout, grades within range.
pub fn validate_instances(instances: &[RankingInstance]) -> Result<usize> {
    let dim = instances
        .first()
        .and_then(RankingInstance::feature_dim)
        .ok_or_else(|| Error::data("empty dataset"))?;
    for inst in instances {
        if inst.item_count() < 2 {
            return Err(Error::data(format!(
                "instance {:?} has {} item(s); at least 2 are required",
                inst.instance_id,
                inst.item_count()
            )));
        }
        for it in &inst.items {
            if it.features.len() != dim {
                return Err(Error::data(format!(
                    "item {:?} has {} features, expected {dim}",
                    it.item_id,
                    it.features.len()
                )));
            }
            if it.relevance.is_some_and(|g| g > MAX_GRADE) {
                return Err(Error::data(format!("item {:?} has grade > 2", it.item_id)));
            }
        }
    }
    Ok(dim)
}
