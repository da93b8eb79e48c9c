use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lrppo::data::{generate_synthetic, SyntheticConfig, UnorderedPair};
use lrppo::eval::InstanceIndex;
use lrppo::models::{init_critic_from_reward, policy_distribution, ActorModel, ModelConfig, RewardModel};
use lrppo::ppo::losses::{
    kl_penalty, partial_order, partial_order_ratio, policy_loss_partial, OrderBranch,
};
use lrppo::ppo::{collect_trajectories, PpoConfig, RolloutModels};

fn batch() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -3.0f64..3.0), 1..40)
}

proptest! {
    #[test]
    fn partial_policy_loss_is_bounded(rows in batch(), delta in -1.0f64..1.0, margin in 0.01f64..3.0) {
        let ratios: Vec<f64> = rows.iter().map(|&(a, b, adv)| partial_order_ratio(a, b, adv, delta, margin)).collect();
        let adv: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let loss = policy_loss_partial(&ratios, &adv).unwrap();
        let max_gap = rows.iter().map(|(a, b, _)| (a - b).abs()).fold(0.0, f64::max);
        let mean_abs = adv.iter().map(|a| a.abs()).sum::<f64>() / adv.len() as f64;
        prop_assert!(loss.abs() <= mean_abs * (margin + max_gap) + 1e-12);
    }

    #[test]
    fn branch_follows_advantage_against_threshold(a in -5.0f64..5.0, b in -5.0f64..5.0, adv in -3.0f64..3.0, delta in -1.0f64..1.0) {
        let r = partial_order_ratio(a, b, adv, delta, 1.0);
        if adv >= delta {
            prop_assert_eq!(OrderBranch::select(adv, delta), OrderBranch::Reinforce);
            prop_assert_eq!(r, -partial_order(a, b, 1.0));
        } else {
            prop_assert_eq!(OrderBranch::select(adv, delta), OrderBranch::Reverse);
            prop_assert_eq!(r, -partial_order(b, a, 1.0));
        }
    }

    #[test]
    fn satisfied_margin_contributes_nothing(b in -5.0f64..5.0, extra in 0.0f64..3.0, adv in 0.0f64..3.0) {
        let a = b + 1.0 + extra;
        prop_assert_eq!(partial_order_ratio(a, b, adv, -0.1, 1.0), 0.0);
        prop_assert_eq!(policy_loss_partial(&[partial_order_ratio(a, b, adv, -0.1, 1.0)], &[adv]).unwrap(), 0.0);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_itself(p in 0.001f64..0.999, q in 0.001f64..0.999) {
        let old = [[p, 1.0 - p]];
        let new = [[q, 1.0 - q]];
        prop_assert!(kl_penalty(&old, &new).unwrap() >= -1e-15);
        prop_assert_eq!(kl_penalty(&old, &old).unwrap(), 0.0);
    }

    #[test]
    fn policy_is_translation_invariant(p1 in -10.0f64..10.0, p2 in -10.0f64..10.0, c in -50.0f64..50.0, t in 0.1f64..5.0) {
        let a = policy_distribution(p1, p2, t).unwrap();
        let b = policy_distribution(p1 + c, p2 + c, t).unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        prop_assert_eq!(a[0] >= a[1], b[0] >= b[1]);
    }
}

#[test]
fn one_step_undiscounted_advantage_is_reward_minus_old_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gen = SyntheticConfig { n_instances: 4, items_per_instance: 6, feature_dim: 4, ..Default::default() };
    let insts: Vec<_> = generate_synthetic(&gen).unwrap().iter().map(|i| i.without_grades()).collect();
    let cfg = ModelConfig::default();
    let actor = ActorModel::new(4, &cfg, &mut rng).unwrap();
    let reward = RewardModel::new(4, &cfg, &mut rng).unwrap();
    let critic = init_critic_from_reward(&reward, &cfg, &mut rng).unwrap();
    let pairs: Vec<UnorderedPair> = insts
        .iter()
        .map(|i| UnorderedPair { instance_id: i.instance_id.clone(), first: 0, second: 3 })
        .collect();
    let index = InstanceIndex::new(&insts);
    let ppo = PpoConfig { n_trajs: 30, minibatch: 10, ..Default::default() };
    assert_eq!((ppo.gamma, ppo.horizon), (0.0, 1));
    let models = RolloutModels { actor: &actor, reward: &reward, critic: &critic, reference: None };
    let recs = collect_trajectories(models, &pairs, &index, &ppo, 5).unwrap();
    assert_eq!(recs.len(), 30);
    for r in &recs {
        assert_eq!(r.target, r.reward);
        assert_eq!(r.advantage, r.reward - r.old_value);
    }
}
