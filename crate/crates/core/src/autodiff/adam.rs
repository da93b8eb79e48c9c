use serde::{Deserialize, Serialize};

use super::params::{ParamGrads, ScorerParams};
use crate::error::Result;

/// AdamW hyperparameters. Weight decay is decoupled: it shrinks the weights
/// directly and never enters the moment estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn weight_decay(self, weight_decay: f64) -> Self {
        Self {
            weight_decay,
            ..self
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One bias-corrected AdamW step. Rejects non-finite or stale gradients
/// before touching any parameter.
pub fn adam_step(params: &mut ScorerParams, grads: &ParamGrads, cfg: &AdamConfig) -> Result<()> {
    params.apply_update(grads, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, Dense, Tensor2D};
    use crate::error::Error;

    fn scalar(w: f64) -> ScorerParams {
        let layer = Dense::new(Tensor2D::new(1, 1, vec![w]).unwrap(), vec![0.0]).unwrap();
        ScorerParams::from_layers(vec![layer], Activation::Tanh, false).unwrap()
    }

    fn grad_for(p: &ScorerParams, gw: f64) -> ParamGrads {
        let mut g = ParamGrads::zeros_for(p);
        g.layers[0].weight.data_mut()[0] = gw;
        g
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = scalar(1.0);
        let g = grad_for(&p, 0.0);
        adam_step(&mut p, &g, &AdamConfig::new(0.1).weight_decay(0.0)).unwrap();
        assert_eq!(p.layers()[0].weight.data()[0], 1.0);
        assert_eq!(p.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let g = grad_for(&p, 1.0);
        adam_step(&mut p, &g, &AdamConfig::new(0.1).weight_decay(0.0)).unwrap();
        // m̂ = v̂ = 1, so the update is lr / (1 + eps).
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.layers()[0].weight.data()[0] - expected).abs() < 1e-15);
        assert!((p.layers()[0].weight.data()[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn decoupled_decay() {
        let mut p = scalar(1.0);
        let g = grad_for(&p, 0.0);
        adam_step(&mut p, &g, &AdamConfig::new(0.1).weight_decay(0.01)).unwrap();
        assert!((p.layers()[0].weight.data()[0] - 0.999).abs() < 1e-15);
        // Decay never leaks into the moments.
        assert_eq!(p.first_moments()[0].weight.data()[0], 0.0);
        assert_eq!(p.second_moments()[0].weight.data()[0], 0.0);
    }

    #[test]
    fn non_finite_gradient_leaves_params_untouched() {
        let mut p = scalar(1.0);
        let mut g = grad_for(&p, 0.5);
        g.layers[0].bias[0] = f64::NAN;
        let before = p.clone();
        let err = adam_step(&mut p, &g, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, before);
    }

    #[test]
    fn stale_gradients_are_rejected() {
        let mut p = scalar(1.0);
        let g = grad_for(&p, 0.5);
        adam_step(&mut p, &g, &AdamConfig::default()).unwrap();
        let err = adam_step(&mut p, &g, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::StaleTape));
        assert_eq!(p.step(), 1);
    }

    #[test]
    fn step_counter_increments_by_one() {
        let mut p = scalar(0.3);
        for expected in 1..=5 {
            let g = grad_for(&p, 0.1);
            adam_step(&mut p, &g, &AdamConfig::default()).unwrap();
            assert_eq!(p.step(), expected);
        }
    }
}
