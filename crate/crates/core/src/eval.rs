//! NDCG@k, reward-model pair accuracy and metric rows.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledItem, PairSample, RankingInstance};
use crate::error::{Error, Result};
use crate::models::{ActorModel, RewardModel, StateEncoding};

pub const NDCG_KS: [usize; 5] = [1, 3, 5, 10, 20];

/// Item indices ordered by descending score; equal scores keep their
/// original relative order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    order: Vec<usize>,
    grades: Vec<u8>,
}

impl RankedList {
    pub fn from_scores(scores: &[f64], grades: &[u8]) -> Result<Self> {
        if scores.len() != grades.len() {
            return Err(Error::Length {
                what: "scores vs grades",
                left: scores.len(),
                right: grades.len(),
            });
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(Self {
            order,
            grades: grades.to_vec(),
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn ranked_grades(&self) -> Vec<u8> {
        self.order.iter().map(|&i| self.grades[i]).collect()
    }
}

/// `Σ_{i=1..min(k,n)} (2^rel_i − 1) / log2(i + 1)`.
pub fn dcg_at_k(ranked_grades: &[u8], k: usize) -> f64 {
    ranked_grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| ((1u64 << g) - 1) as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k of grades already in ranked order; 1.0 when every grade is zero.
pub fn ndcg_of_ranked_grades(ranked_grades: &[u8], k: usize) -> f64 {
    let mut ideal = ranked_grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg == 0.0 {
        return 1.0;
    }
    dcg_at_k(ranked_grades, k) / idcg
}

pub fn ndcg_at_k(ranked: &RankedList, k: usize) -> f64 {
    ndcg_of_ranked_grades(&ranked.ranked_grades(), k)
}

/// Pairwise (cascade) summation; the result depends only on the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Mean NDCG@k for each `k`, uniform over instances, scoring items with `score`.
pub fn mean_ndcg<F>(instances: &[RankingInstance], ks: &[usize], score: F) -> Result<Vec<f64>>
where
    F: Fn(&LabeledItem) -> Result<f64> + Sync,
{
    if instances.is_empty() {
        return Err(Error::data("cannot evaluate an empty instance list"));
    }
    let per_instance: Vec<Vec<f64>> = instances
        .par_iter()
        .map(|inst| {
            let grades = inst.grades()?;
            let scores = inst.items.iter().map(&score).collect::<Result<Vec<_>>>()?;
            let ranked = RankedList::from_scores(&scores, &grades)?;
            let rg = ranked.ranked_grades();
            Ok(ks.iter().map(|&k| ndcg_of_ranked_grades(&rg, k)).collect())
        })
        .collect::<Result<_>>()?;
    let n = per_instance.len() as f64;
    Ok((0..ks.len())
        .map(|j| {
            let column: Vec<f64> = per_instance.iter().map(|row| row[j]).collect();
            pairwise_sum(&column) / n
        })
        .collect())
}

/// One evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub split: String,
    pub seed: u64,
    pub iteration: usize,
    pub ndcg1: f64,
    pub ndcg3: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub ndcg20: f64,
    pub reward_acc: Option<f64>,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str =
        "split,seed,iteration,ndcg1,ndcg3,ndcg5,ndcg10,ndcg20,reward_acc";

    pub fn ndcg(&self) -> [f64; 5] {
        [self.ndcg1, self.ndcg3, self.ndcg5, self.ndcg10, self.ndcg20]
    }

    pub fn to_csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{},",
            self.split,
            self.seed,
            self.iteration,
            self.ndcg1,
            self.ndcg3,
            self.ndcg5,
            self.ndcg10,
            self.ndcg20
        );
        if let Some(acc) = self.reward_acc {
            write!(s, "{acc}").expect("write to String");
        }
        s
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(MetricsRow::CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn metrics_jsonl(rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Ranks each instance's items by actor score and averages NDCG@{1,3,5,10,20}.
pub fn evaluate_model(
    actor: &ActorModel,
    instances: &[RankingInstance],
    split: &str,
    seed: u64,
    iteration: usize,
) -> Result<MetricsRow> {
    let v = mean_ndcg(instances, &NDCG_KS, |item| actor.score(&item.features))?;
    Ok(MetricsRow {
        split: split.to_string(),
        seed,
        iteration,
        ndcg1: v[0],
        ndcg3: v[1],
        ndcg5: v[2],
        ndcg10: v[3],
        ndcg20: v[4],
        reward_acc: None,
    })
}

/// Feature lookup for pairs that reference instances by id.
pub struct InstanceIndex<'a> {
    by_id: HashMap<&'a str, &'a RankingInstance>,
}

impl<'a> InstanceIndex<'a> {
    pub fn new<I: IntoIterator<Item = &'a RankingInstance>>(instances: I) -> Self {
        Self {
            by_id: instances
                .into_iter()
                .map(|i| (i.instance_id.as_str(), i))
                .collect(),
        }
    }

    pub fn get(&self, id: &str) -> Result<&'a RankingInstance> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::data(format!("unknown instance id {id:?}")))
    }

    pub fn features(&self, id: &str, index: usize) -> Result<&'a [f64]> {
        let inst = self.get(id)?;
        inst.items
            .get(index)
            .map(|it| it.features.as_slice())
            .ok_or_else(|| Error::data(format!("item {index} out of range in {id:?}")))
    }

    /// `(g_ini, g_c)`: the pair in dataset order and in preference order.
    pub fn preference_states(&self, pair: &PairSample) -> Result<(StateEncoding, StateEncoding)> {
        if pair.preferred_index == pair.other_index {
            return Err(Error::data("pair refers to the same item twice"));
        }
        let (i, j) = pair.initial_order();
        let initial = StateEncoding::new(
            self.features(&pair.instance_id, i)?,
            self.features(&pair.instance_id, j)?,
        )?;
        let correct = StateEncoding::new(
            self.features(&pair.instance_id, pair.preferred_index)?,
            self.features(&pair.instance_id, pair.other_index)?,
        )?;
        Ok((initial, correct))
    }
}

/// Fraction of pairs with `R([g_ini, g_c]) > R([g_ini, flip(g_c)])`; ties count as wrong.
pub fn reward_accuracy(
    reward: &RewardModel,
    pairs: &[PairSample],
    index: &InstanceIndex<'_>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::data("reward accuracy needs at least one pair"));
    }
    let hits: Vec<f64> = pairs
        .par_iter()
        .map(|p| {
            let (initial, correct) = index.preference_states(p)?;
            let good = reward.reward(&initial, &correct)?;
            let bad = reward.reward(&initial, &correct.swapped())?;
            Ok(if good > bad { 1.0 } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&hits) / hits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(grades: &[u8]) -> RankingInstance {
        RankingInstance {
            instance_id: "q".into(),
            items: grades
                .iter()
                .enumerate()
                .map(|(i, &g)| LabeledItem {
                    item_id: format!("d{i}"),
                    features: vec![g as f64],
                    relevance: Some(g),
                })
                .collect(),
        }
    }

    #[test]
    fn dcg_examples() {
        let expected = 3.0 + 1.0 / 3f64.log2();
        assert!((dcg_at_k(&[2, 1, 0], 3) - expected).abs() < 1e-12);
        assert!((dcg_at_k(&[2, 1, 0], 3) - 3.630930).abs() < 1e-6);
        assert_eq!(dcg_at_k(&[0, 0, 0], 3), 0.0);
        assert_eq!(dcg_at_k(&[2, 0], 1), 3.0);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_of_ranked_grades(&[2, 1, 0], 3), 1.0);
        let reversed = ndcg_of_ranked_grades(&[0, 1, 2], 3);
        assert!((reversed - 0.586_882_671_435_72).abs() < 1e-12);
        assert_eq!(ndcg_of_ranked_grades(&[0, 0, 0], 3), 1.0);
    }

    #[test]
    fn ties_break_by_original_index() {
        let ranked = RankedList::from_scores(&[1.0, 3.0, 1.0, 3.0], &[0, 1, 2, 0]).unwrap();
        assert_eq!(ranked.order(), &[1, 3, 0, 2]);
    }

    #[test]
    fn perfect_and_constant_scorers() {
        let insts = [instance(&[0, 2, 1, 1, 0]), instance(&[2, 2, 0])];
        let v = mean_ndcg(&insts, &NDCG_KS, |it| Ok(it.relevance.unwrap() as f64)).unwrap();
        assert!(v.iter().all(|&x| x == 1.0));

        let ideal = mean_ndcg(&[instance(&[2, 1, 0])], &[3], |_| Ok(0.0)).unwrap();
        assert_eq!(ideal, vec![1.0]);
        let worst = mean_ndcg(&[instance(&[0, 1, 2])], &[3], |_| Ok(0.0)).unwrap();
        assert!((worst[0] - 0.586_882_671_435_72).abs() < 1e-12);
    }

    #[test]
    fn uniform_average_over_instances() {
        // Second instance: constant scorer on [0, 2] gives DCG 3/log2(3), IDCG 3.
        let insts = [instance(&[2, 0]), instance(&[0, 2])];
        let v = mean_ndcg(&insts, &[2], |_| Ok(0.0)).unwrap();
        let second = 1.0 / 3f64.log2();
        assert!((v[0] - (1.0 + second) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let row = MetricsRow {
            split: "final".into(),
            seed: 2,
            iteration: 7,
            ndcg1: 0.5,
            ndcg3: 0.25,
            ndcg5: 1.0,
            ndcg10: 0.0,
            ndcg20: 0.75,
            reward_acc: None,
        };
        let csv = metrics_csv(std::slice::from_ref(&row));
        assert_eq!(
            csv,
            "split,seed,iteration,ndcg1,ndcg3,ndcg5,ndcg10,ndcg20,reward_acc\nfinal,2,7,0.5,0.25,1,0,0.75,\n"
        );
        let back: MetricsRow = serde_json::from_str(metrics_jsonl(std::slice::from_ref(&row)).unwrap().trim()).unwrap();
        assert_eq!(back, row);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(pairwise_sum(&v), 15.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
