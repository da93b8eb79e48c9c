//! Synthetic source/target ranking datasets with a controlled domain shift.
//!
//! Each item vector is `[item features | instance context]`; the context
//! block is shared by all items of one instance. The latent relevance is
//! `wᵀx + λ·cᵀBx` and grades are assigned by per-instance percentiles
//! (bottom 50% low, next 30% medium, top 20% high). The target domain
//! rotates `w` in a random plane and shifts the item-feature mean.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::pairs::instance_rng;
use super::{LabeledItem, RankingInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_instances: usize,
    pub items_per_instance: usize,
    pub feature_dim: usize,
    pub domain: Domain,
    pub seed: u64,
    /// Angle between the source and target relevance directions.
    pub rotation_deg: f64,
    /// Norm of the target item-feature mean shift.
    pub shift: f64,
    /// Weight of the item × context interaction term.
    pub interaction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_instances: 200,
            items_per_instance: 20,
            feature_dim: 16,
            domain: Domain::Source,
            seed: 0,
            rotation_deg: 60.0,
            shift: 0.5,
            interaction: 0.5,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.items_per_instance < 2 {
            return Err(Error::config("items_per_instance must be at least 2"));
        }
        if self.feature_dim < 4 {
            return Err(Error::config("feature_dim must be at least 4"));
        }
        if self.n_instances == 0 {
            return Err(Error::config("n_instances must be positive"));
        }
        if ![self.rotation_deg, self.shift, self.interaction]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::config("synthetic parameters must be finite"));
        }
        Ok(())
    }

    fn context_dim(&self) -> usize {
        (self.feature_dim / 4).max(1)
    }

    fn item_dim(&self) -> usize {
        self.feature_dim - self.context_dim()
    }
}

const WORLD_SALT: u64 = 0x0057_0A1D;
const SOURCE_SALT: u64 = 0x5_0CE;
const TARGET_SALT: u64 = 0x7A_96E7;

/// Parameters shared by both domains of one seed.
struct World {
    weight: Vec<f64>,
    interaction: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn world(cfg: &SyntheticConfig) -> World {
    let (di, dc) = (cfg.item_dim(), cfg.context_dim());
    let mut rng = instance_rng(cfg.seed, WORLD_SALT, 0);
    let mut w = normal_vec(&mut rng, di);
    normalize(&mut w);
    // Orthogonal direction for the rotation plane.
    let mut u = normal_vec(&mut rng, di);
    let proj = dot(&u, &w);
    u.iter_mut().zip(&w).for_each(|(x, wi)| *x -= proj * wi);
    normalize(&mut u);
    let scale = 1.0 / (di as f64).sqrt();
    let interaction = (0..dc)
        .map(|_| normal_vec(&mut rng, di).into_iter().map(|v| v * scale).collect())
        .collect();
    let mut shift_dir = normal_vec(&mut rng, di);
    normalize(&mut shift_dir);

    match cfg.domain {
        Domain::Source => World {
            weight: w,
            interaction,
            mean: vec![0.0; di],
        },
        Domain::Target => {
            let theta = cfg.rotation_deg.to_radians();
            let weight = w
                .iter()
                .zip(&u)
                .map(|(wi, ui)| theta.cos() * wi + theta.sin() * ui)
                .collect();
            World {
                weight,
                interaction,
                mean: shift_dir.iter().map(|s| s * cfg.shift).collect(),
            }
        }
    }
}

/// Grades from latent scores: ranks below ⌊0.5n⌋ are low, below ⌊0.8n⌋ medium.
fn percentile_grades(latent: &[f64]) -> Vec<u8> {
    let n = latent.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));
    let (low, mid) = (n / 2, (4 * n) / 5);
    let mut grades = vec![0u8; n];
    for (rank, &idx) in order.iter().enumerate() {
        grades[idx] = if rank < low {
            0
        } else if rank < mid {
            1
        } else {
            2
        };
    }
    grades
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<RankingInstance>> {
    cfg.validate()?;
    let world = world(cfg);
    let (salt, prefix) = match cfg.domain {
        Domain::Source => (SOURCE_SALT, "src"),
        Domain::Target => (TARGET_SALT, "tgt"),
    };
    let di = cfg.item_dim();
    let instances = (0..cfg.n_instances)
        .map(|j| {
            let mut rng = instance_rng(cfg.seed, salt, j);
            let context = normal_vec(&mut rng, cfg.context_dim());
            let ctx_proj: Vec<f64> = (0..di)
                .map(|k| {
                    context
                        .iter()
                        .zip(&world.interaction)
                        .map(|(c, row)| c * row[k])
                        .sum()
                })
                .collect();
            let item_vecs: Vec<Vec<f64>> = (0..cfg.items_per_instance)
                .map(|_| {
                    normal_vec(&mut rng, di)
                        .into_iter()
                        .zip(&world.mean)
                        .map(|(z, m)| z + m)
                        .collect()
                })
                .collect();
            let latent: Vec<f64> = item_vecs
                .iter()
                .map(|x| dot(&world.weight, x) + cfg.interaction * dot(&ctx_proj, x))
                .collect();
            let grades = percentile_grades(&latent);
            let id = format!("{prefix}{j}");
            let items = item_vecs
                .into_iter()
                .zip(grades)
                .enumerate()
                .map(|(k, (mut x, g))| {
                    x.extend_from_slice(&context);
                    LabeledItem {
                        item_id: format!("{id}-{k}"),
                        features: x,
                        relevance: Some(g),
                    }
                })
                .collect();
            RankingInstance {
                instance_id: id,
                items,
            }
        })
        .collect();
    Ok(instances)
}

/// Source and target datasets drawn from the same world.
pub fn generate_transfer_pair(
    cfg: &SyntheticConfig,
    n_source: usize,
    n_target: usize,
) -> Result<(Vec<RankingInstance>, Vec<RankingInstance>)> {
    let source = generate_synthetic(&SyntheticConfig {
        n_instances: n_source,
        domain: Domain::Source,
        ..cfg.clone()
    })?;
    let target = generate_synthetic(&SyntheticConfig {
        n_instances: n_target,
        domain: Domain::Target,
        ..cfg.clone()
    })?;
    Ok((source, target))
}
