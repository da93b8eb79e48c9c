use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RankingInstance;
use crate::error::{Error, Result};

/// A preference pair inside one instance: `preferred_index` is more relevant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairSample {
    pub instance_id: String,
    pub preferred_index: usize,
    pub other_index: usize,
}

impl PairSample {
    /// The pair as it appears in the dataset (lower index first).
    pub fn initial_order(&self) -> (usize, usize) {
        (
            self.preferred_index.min(self.other_index),
            self.preferred_index.max(self.other_index),
        )
    }
}

/// A pair with no preference attached, stored in dataset order (`first < second`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnorderedPair {
    pub instance_id: String,
    pub first: usize,
    pub second: usize,
}

/// Every `(i, j)` with `i < j < n`, in lexicographic order.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

/// `⌈proportion · C(n, 2)⌉`, robust to representation error in `proportion`.
pub fn annotated_pair_count(proportion: f64, n: usize) -> usize {
    let total = n * n.saturating_sub(1) / 2;
    let raw = proportion * total as f64;
    let count = (raw - 1e-9).ceil().max(0.0) as usize;
    count.min(total)
}

/// Every unequal-grade pair of one instance, oriented by grade, in
/// lexicographic index order.
pub fn graded_pairs(instance: &RankingInstance) -> Result<Vec<PairSample>> {
    let grades = instance.grades()?;
    Ok(all_pairs(instance.item_count())
        .into_iter()
        .filter(|&(i, j)| grades[i] != grades[j])
        .map(|(i, j)| {
            let (p, o) = if grades[i] > grades[j] { (i, j) } else { (j, i) };
            PairSample {
                instance_id: instance.instance_id.clone(),
                preferred_index: p,
                other_index: o,
            }
        })
        .collect())
}

pub(crate) fn check_proportion(proportion: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(Error::invalid(format!("{what} must lie in [0, 1], got {proportion}")));
    }
    Ok(())
}

/// A reproducible RNG for one instance, independent of every other instance.
pub(crate) fn instance_rng(seed: u64, salt: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.rotate_left(32));
    rng.set_stream(index as u64);
    rng
}

const ANNOTATION_SALT: u64 = 0xA110_7A7E;

/// Draws `⌈proportion · C(n, 2)⌉` unequal-grade pairs per instance, oriented by
/// grade. Each instance's candidates are shuffled once per seed and a prefix
/// is taken, so a larger proportion always extends a smaller one.
pub fn sample_pair_annotations(
    instances: &[RankingInstance],
    proportion: f64,
    seed: u64,
) -> Result<Vec<PairSample>> {
    check_proportion(proportion, "annotation proportion")?;
    let mut out = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        let grades = inst.grades()?;
        let want = annotated_pair_count(proportion, inst.item_count());
        if want == 0 {
            continue;
        }
        let mut candidates: Vec<(usize, usize)> = all_pairs(inst.item_count())
            .into_iter()
            .filter(|&(i, j)| grades[i] != grades[j])
            .collect();
        candidates.shuffle(&mut instance_rng(seed, ANNOTATION_SALT, k));
        out.extend(candidates.into_iter().take(want).map(|(i, j)| {
            let (preferred_index, other_index) = if grades[i] > grades[j] { (i, j) } else { (j, i) };
            PairSample {
                instance_id: inst.instance_id.clone(),
                preferred_index,
                other_index,
            }
        }));
    }
    Ok(out)
}
