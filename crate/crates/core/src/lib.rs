//! Label relevance ranking with a three-stage pipeline: a supervised
//! per-item scorer, a pairwise preference reward model, and an actor–critic
//! PPO variant whose policy ratio is a hinge on the actor's score gap.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod pipeline;
pub mod ppo;

pub use error::{Error, Result};
