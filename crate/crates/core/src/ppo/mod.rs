//! Partial-order PPO: losses, rollouts and the actor-critic update.

mod config;
pub mod graph;
pub mod losses;
mod trajectory;
mod update;

pub use config::{KlPlacement, PpoConfig, RatioMode};
pub use losses::{LossParts, LossWeights, OrderBranch};
pub use trajectory::{collect_trajectories, PairAction, RolloutModels, TrajectoryRecord};
pub use update::{build_minibatch_loss, loss_weights, ppo_iteration, IterationDiagnostics, MinibatchGraph};
