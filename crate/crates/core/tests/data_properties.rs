use std::collections::HashSet;

use proptest::prelude::*;

use lrppo::data::{
    build_splits, generate_transfer_pair, parse_letor, sample_pair_annotations, serialize_letor, LabeledItem,
    RankingInstance, SplitConfig, SyntheticConfig,
};

fn instance(id: String, grades: Vec<u8>, dim: usize) -> RankingInstance {
    RankingInstance {
        instance_id: id,
        items: grades
            .into_iter()
            .enumerate()
            .map(|(k, g)| LabeledItem {
                item_id: format!("d{k}"),
                features: (0..dim).map(|d| (k * dim + d) as f64 * 0.25 - 1.0).collect(),
                relevance: Some(g),
            })
            .collect(),
    }
}

fn instances() -> impl Strategy<Value = Vec<RankingInstance>> {
    prop::collection::vec(prop::collection::vec(0u8..=2, 2..15), 1..6).prop_map(|all| {
        all.into_iter()
            .enumerate()
            .map(|(q, grades)| instance(format!("q{q}"), grades, 3))
            .collect()
    })
}

proptest! {
    #[test]
    fn parse_serialize_parse_is_parse(insts in instances()) {
        let once = parse_letor(&serialize_letor(&insts).unwrap()).unwrap();
        let twice = parse_letor(&serialize_letor(&once.instances).unwrap()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn annotated_pairs_prefer_the_higher_grade(insts in instances(), p in 0.0f64..=1.0, seed in any::<u64>()) {
        for pair in sample_pair_annotations(&insts, p, seed).unwrap() {
            let inst = insts.iter().find(|i| i.instance_id == pair.instance_id).unwrap();
            let g = inst.grades().unwrap();
            prop_assert!(g[pair.preferred_index] > g[pair.other_index]);
        }
    }

    #[test]
    fn raising_the_proportion_keeps_earlier_pairs(
        insts in instances(),
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small: HashSet<_> = sample_pair_annotations(&insts, lo, seed).unwrap().into_iter().collect();
        let large: HashSet<_> = sample_pair_annotations(&insts, hi, seed).unwrap().into_iter().collect();
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn splits_are_a_pure_function_of_inputs_and_seed(seed in 0u64..1000, p in 0.0f64..=0.5) {
        let gen = SyntheticConfig { items_per_instance: 6, feature_dim: 4, seed: 3, ..Default::default() };
        let (source, target) = generate_transfer_pair(&gen, 5, 6).unwrap();
        let cfg = SplitConfig { annotation_proportion: p, seed, ..Default::default() };
        let a = build_splits(&source, &target, &cfg).unwrap();
        let b = build_splits(&source, &target, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn test_split_is_shared_across_annotation_proportions() {
    let gen = SyntheticConfig { items_per_instance: 8, feature_dim: 4, ..Default::default() };
    let (source, target) = generate_transfer_pair(&gen, 10, 20).unwrap();
    let test_ids = |p: f64| {
        let cfg = SplitConfig { annotation_proportion: p, ..Default::default() };
        let split = build_splits(&source, &target, &cfg).unwrap();
        split.test.iter().map(|i| i.instance_id.clone()).collect::<Vec<_>>()
    };
    let reference = test_ids(0.05);
    for p in [0.1, 0.2, 0.4] {
        assert_eq!(test_ids(p), reference);
    }
}

#[test]
fn target_training_instances_carry_no_grades() {
    let gen = SyntheticConfig { items_per_instance: 8, feature_dim: 4, ..Default::default() };
    let (source, target) = generate_transfer_pair(&gen, 10, 20).unwrap();
    let split = build_splits(&source, &target, &SplitConfig::default()).unwrap();
    assert!(split.target_train.iter().flat_map(|i| &i.items).all(|it| it.relevance.is_none()));
    assert!(split.test.iter().flat_map(|i| &i.items).all(|it| it.relevance.is_some()));
}
