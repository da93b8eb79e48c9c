use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lrppo::autodiff::Tape;
use lrppo::models::{actor_scores, init_critic_from_reward, ActorModel, CriticModel, ModelConfig, RewardModel, StateEncoding};

const DIM: usize = 4;

fn models(seed: u64) -> (ActorModel, RewardModel, CriticModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig::default();
    let actor = ActorModel::new(DIM, &cfg, &mut rng).unwrap();
    let reward = RewardModel::new(DIM, &cfg, &mut rng).unwrap();
    let critic = init_critic_from_reward(&reward, &cfg, &mut rng).unwrap();
    (actor, reward, critic)
}

fn features() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, DIM)
}

proptest! {
    #[test]
    fn item_score_does_not_depend_on_its_partner(seed in 0u64..50, x in features(), y in features(), z in features()) {
        let (actor, _, _) = models(seed);
        let with_y = actor_scores(&actor, &StateEncoding::new(&x, &y).unwrap()).unwrap();
        let with_z = actor_scores(&actor, &StateEncoding::new(&z, &x).unwrap()).unwrap();
        prop_assert_eq!(with_y.0, with_z.1);
        prop_assert_eq!(with_y.0, actor.score(&x).unwrap());
    }

    #[test]
    fn gradients_of_a_sum_are_sums_of_gradients(seed in 0u64..50, x in features(), y in features()) {
        let (actor, _, _) = models(seed);
        let grads = |both: bool, which: usize| {
            let mut tape = Tape::new();
            let slot = tape.bind(&actor.params);
            let a = actor.score_node(&mut tape, slot, &x).unwrap();
            let b = actor.score_node(&mut tape, slot, &y).unwrap();
            let b2 = tape.square(b);
            let out = match (both, which) {
                (true, _) => tape.add(a, b2).unwrap(),
                (false, 0) => a,
                _ => b2,
            };
            tape.backward(out, &[1.0]).unwrap().param(slot).flat()
        };
        let joint = grads(true, 0);
        let (ga, gb) = (grads(false, 0), grads(false, 1));
        for ((j, a), b) in joint.iter().zip(&ga).zip(&gb) {
            prop_assert!((j - (a + b)).abs() <= 1e-12 * (1.0 + j.abs()));
        }
    }

    #[test]
    fn gradients_are_deterministic(seed in 0u64..50, x in features()) {
        let run = || {
            let (actor, _, _) = models(seed);
            let mut tape = Tape::new();
            let slot = tape.bind(&actor.params);
            let a = actor.score_node(&mut tape, slot, &x).unwrap();
            tape.backward(a, &[1.0]).unwrap().param(slot).flat()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn all_models_round_trip_through_files() {
    let (actor, reward, critic) = models(3);
    let dir = tempfile::tempdir().unwrap();
    let (a, r, c) = (dir.path().join("a.json"), dir.path().join("r.json"), dir.path().join("c.json"));
    actor.save(&a).unwrap();
    reward.save(&r).unwrap();
    critic.save(&c).unwrap();
    assert_eq!(ActorModel::load(&a).unwrap(), actor);
    assert_eq!(RewardModel::load(&r).unwrap(), reward);
    assert_eq!(CriticModel::load(&c).unwrap(), critic);
    let x = StateEncoding::new(&[0.1, -0.2, 0.3, 0.4], &[1.0, 0.5, -0.5, 0.0]).unwrap();
    assert_eq!(RewardModel::load(&r).unwrap().reward(&x, &x.swapped()).unwrap(), reward.reward(&x, &x.swapped()).unwrap());
    assert_eq!(CriticModel::load(&c).unwrap().value(&x).unwrap(), critic.value(&x).unwrap());
}

#[test]
fn loading_an_actor_file_as_a_reward_model_fails() {
    let (actor, _, _) = models(4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    actor.save(&path).unwrap();
    assert!(RewardModel::load(&path).is_err());
}
