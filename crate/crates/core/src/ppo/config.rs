use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the policy term of the loss turns scores into a surrogate objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// Negated hinge on the score gap, branch chosen by `Â` vs `δ`.
    PartialOrder,
    /// `π_θ(a|s) / π_old(a|s)` times `Â`.
    Original,
    /// Clipped variant of [`RatioMode::Original`].
    OriginalClipped,
}

impl RatioMode {
    pub const ALL: [RatioMode; 3] = [
        RatioMode::PartialOrder,
        RatioMode::Original,
        RatioMode::OriginalClipped,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RatioMode::PartialOrder => "partial_order",
            RatioMode::Original => "original",
            RatioMode::OriginalClipped => "original_clipped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlPlacement {
    /// `+ c3 · KL` inside the joint loss.
    InLoss,
    /// `r_t ← r_t − c3 · KL_t` during collection; no KL term in the loss.
    SubtractedFromReward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Discount factor γ.
    pub gamma: f64,
    /// Timesteps per trajectory (T).
    pub horizon: usize,
    pub n_trajs: usize,
    pub k_epochs: usize,
    pub minibatch: usize,
    pub n_iters: usize,
    /// Partial-order margin m.
    pub margin: f64,
    /// Advantage threshold δ selecting the partial-order branch.
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub clip_epsilon: f64,
    pub ratio_mode: RatioMode,
    pub kl_placement: KlPlacement,
    pub temperature: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            horizon: 1,
            n_trajs: 200,
            k_epochs: 1,
            minibatch: 24,
            n_iters: 50,
            margin: 1.0,
            delta: -0.1,
            c1: 1.0,
            c2: 1e-3,
            c3: 1e-3,
            clip_epsilon: 0.2,
            ratio_mode: RatioMode::PartialOrder,
            kl_placement: KlPlacement::SubtractedFromReward,
            temperature: 1.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.horizon == 0 || self.n_trajs == 0 || self.k_epochs == 0 || self.minibatch == 0 {
            return fail("horizon, n_trajs, k_epochs and minibatch must be positive".into());
        }
        if self.minibatch > self.n_trajs * self.horizon {
            return fail(format!(
                "minibatch {} exceeds n_trajs × T = {}",
                self.minibatch,
                self.n_trajs * self.horizon
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return fail("margin must be positive".into());
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail(format!("clip epsilon must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return fail("temperature must be positive".into());
        }
        if ![self.delta, self.c1, self.c2, self.c3].iter().all(|v| v.is_finite()) {
            return fail("delta and loss coefficients must be finite".into());
        }
        Ok(())
    }
}
