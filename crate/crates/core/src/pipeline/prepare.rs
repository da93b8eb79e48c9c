use std::fs;

use super::config::{DataSource, ExperimentConfig};
use crate::data::{
    build_splits, generate_transfer_pair, graded_pairs, parse_letor_with, validate_instances,
    DatasetSplit, PairSample, RankingInstance, SplitConfig, SyntheticConfig,
};
use crate::error::{Error, Result};

/// A split plus the oriented held-out pairs used to score the reward model.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub split: DatasetSplit,
    /// Every unequal-grade pair of the test instances.
    pub heldout_pairs: Vec<PairSample>,
    pub feature_dim: usize,
}

/// Source and target instances before splitting.
pub fn load_instances(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<RankingInstance>, Vec<RankingInstance>)> {
    let (source, target) = match &cfg.data {
        DataSource::Synthetic { generator, n_source, n_target } => {
            let generator = SyntheticConfig { seed, ..generator.clone() };
            generate_transfer_pair(&generator, *n_source, *n_target)?
        }
        DataSource::Letor { source, target, grade_mapping, items_per_instance } => {
            let read = |path: &std::path::Path| -> Result<Vec<RankingInstance>> {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
                let parsed = parse_letor_with(&text, *grade_mapping)?;
                match items_per_instance {
                    Some(n) => parsed.instances.iter().map(|i| i.pad_or_truncate(*n)).collect(),
                    None => Ok(parsed.instances),
                }
            };
            (read(source)?, read(target)?)
        }
    };
    let ds = validate_instances(&source)?;
    let dt = validate_instances(&target)?;
    if ds != dt {
        return Err(Error::data(format!("source has {ds} features, target has {dt}")));
    }
    Ok((source, target))
}

/// Loads or generates the data for `seed` and builds the training splits.
pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let (source, target) = load_instances(cfg, seed)?;
    let split = build_splits(&source, &target, &SplitConfig { seed, ..cfg.split.clone() })?;
    let mut heldout_pairs = Vec::new();
    for inst in &split.test {
        heldout_pairs.extend(graded_pairs(inst)?);
    }
    let feature_dim = validate_instances(&source)?;
    Ok(PreparedData { split, heldout_pairs, feature_dim })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic {
                generator: SyntheticConfig { items_per_instance: 8, feature_dim: 8, ..Default::default() },
                n_source: 6,
                n_target: 10,
            },
            ..Default::default()
        }
    }

    #[test]
    fn heldout_pairs_come_from_test_only() {
        let d = prepare_data(&small(), 3).unwrap();
        assert_eq!(d.split.test.len(), 2);
        let test_ids: Vec<_> = d.split.test.iter().map(|i| i.instance_id.as_str()).collect();
        assert!(!d.heldout_pairs.is_empty());
        assert!(d.heldout_pairs.iter().all(|p| test_ids.contains(&p.instance_id.as_str())));
        assert_eq!(d.feature_dim, 8);
    }

    #[test]
    fn seed_drives_generation() {
        let a = prepare_data(&small(), 1).unwrap();
        let b = prepare_data(&small(), 1).unwrap();
        let c = prepare_data(&small(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.split.source, c.split.source);
    }

    #[test]
    fn missing_letor_file_is_a_data_error() {
        let cfg = ExperimentConfig {
            data: DataSource::Letor {
                source: "/nonexistent/a.letor".into(),
                target: "/nonexistent/b.letor".into(),
                grade_mapping: Default::default(),
                items_per_instance: None,
            },
            ..Default::default()
        };
        assert!(matches!(prepare_data(&cfg, 0), Err(Error::Data(_))));
    }
}
