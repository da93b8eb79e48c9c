//! Scalar reference forms of every loss used across the three stages.
//!
//! The tape builders in [`super::graph`] must agree with these to rounding.

use super::config::KlPlacement;
use crate::error::{Error, Result};

const DIST_TOLERANCE: f64 = 1e-9;

/// Smooth L1 between a prediction and a target grade.
pub fn smooth_l1(prediction: f64, target: f64, beta: f64) -> f64 {
    let d = (prediction - target).abs();
    if d < beta {
        0.5 * d * d / beta
    } else {
        d - 0.5 * beta
    }
}

/// Hinge pushing `R(correct)` above `R(flipped)` by at least `margin`.
pub fn reward_margin_loss(reward_correct: f64, reward_flipped: f64, margin: f64) -> f64 {
    (margin - (reward_correct - reward_flipped)).max(0.0)
}

/// Discounted return from step `t` plus the bootstrapped terminal value.
pub fn target_value(rewards: &[f64], gamma: f64, terminal_value: f64) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::invalid("target_value needs at least one reward"));
    }
    let mut discount = 1.0;
    let mut acc = 0.0;
    for r in rewards {
        acc += discount * r;
        discount *= gamma;
    }
    Ok(acc + discount * terminal_value)
}

pub fn advantage(target: f64, old_value: f64) -> f64 {
    target - old_value
}

/// `max(0, m − (high − low))`: zero once `high` leads `low` by the margin.
pub fn partial_order(high: f64, low: f64, margin: f64) -> f64 {
    (margin - (high - low)).max(0.0)
}

/// Which item the partial-order term pushes upward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderBranch {
    /// Advantage at or above the threshold: reinforce `first > second`.
    Reinforce,
    /// Advantage below the threshold: reinforce `second > first`.
    Reverse,
}

impl OrderBranch {
    pub fn select(advantage: f64, delta: f64) -> Self {
        if advantage >= delta {
            OrderBranch::Reinforce
        } else {
            OrderBranch::Reverse
        }
    }
}

pub fn partial_order_ratio(first: f64, second: f64, advantage: f64, delta: f64, margin: f64) -> f64 {
    match OrderBranch::select(advantage, delta) {
        OrderBranch::Reinforce => -partial_order(first, second, margin),
        OrderBranch::Reverse => -partial_order(second, first, margin),
    }
}

fn check_lengths(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Length { what, left: a, right: b });
    }
    if a == 0 {
        return Err(Error::invalid(format!("{what}: empty batch")));
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

pub fn policy_loss_partial(ratios: &[f64], advantages: &[f64]) -> Result<f64> {
    check_lengths("ratios vs advantages", ratios.len(), advantages.len())?;
    Ok(-mean(ratios.iter().zip(advantages).map(|(r, a)| r * a.abs())))
}

pub fn original_ratio(prob_new: f64, prob_old: f64) -> Result<f64> {
    if prob_old.is_nan() || prob_old <= 0.0 {
        return Err(Error::invalid(format!("old probability must be positive, got {prob_old}")));
    }
    Ok(prob_new / prob_old)
}

pub fn clipped_policy_loss(ratios: &[f64], advantages: &[f64], epsilon: f64) -> Result<f64> {
    check_lengths("ratios vs advantages", ratios.len(), advantages.len())?;
    Ok(-mean(ratios.iter().zip(advantages).map(|(&r, &a)| {
        let clipped = r.clamp(1.0 - epsilon, 1.0 + epsilon);
        (r * a).min(clipped * a)
    })))
}

pub fn value_loss(values: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths("values vs targets", values.len(), targets.len())?;
    Ok(mean(values.iter().zip(targets).map(|(v, t)| (v - t) * (v - t))))
}

fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.iter().any(|p| p.is_nan() || *p < 0.0) {
        return Err(Error::invalid(format!("negative or NaN probability in {dist:?}")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > DIST_TOLERANCE {
        return Err(Error::invalid(format!("probabilities sum to {total}")));
    }
    Ok(())
}

fn plogp(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * p.ln()
    }
}

/// Mean entropy over a batch of categorical distributions.
pub fn entropy_bonus(dists: &[[f64; 2]]) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::invalid("entropy of an empty batch"));
    }
    for d in dists {
        check_distribution(d)?;
    }
    Ok(mean(dists.iter().map(|d| -d.iter().map(|p| plogp(*p)).sum::<f64>())))
}

/// Mean `KL(old ‖ new)` over a batch.
pub fn kl_penalty(old: &[[f64; 2]], new: &[[f64; 2]]) -> Result<f64> {
    check_lengths("old vs new distributions", old.len(), new.len())?;
    let mut terms = Vec::with_capacity(old.len());
    for (o, n) in old.iter().zip(new) {
        check_distribution(o)?;
        check_distribution(n)?;
        let mut kl = 0.0;
        for (po, pn) in o.iter().zip(n) {
            if *po == 0.0 {
                continue;
            }
            if *pn == 0.0 {
                return Err(Error::invalid("new distribution is zero where old is positive"));
            }
            kl += po * (po / pn).ln();
        }
        terms.push(kl);
    }
    Ok(mean(terms.into_iter()))
}

/// Components of the joint actor-critic objective for one minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub value: f64,
    pub entropy: f64,
    pub kl: f64,
}

pub fn total_loss(parts: LossParts, weights: LossWeights, placement: KlPlacement) -> f64 {
    let base = parts.policy + weights.value * parts.value - weights.entropy * parts.entropy;
    match placement {
        KlPlacement::InLoss => base + weights.kl * parts.kl,
        KlPlacement::SubtractedFromReward => base,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn smooth_l1_branches() {
        close(smooth_l1(1.0, 1.0, 0.3), 0.0);
        close(smooth_l1(1.2, 1.0, 0.3), 0.066_667);
        close(smooth_l1(2.0, 0.0, 0.3), 1.85);
        // continuity at |d| = β
        let eps = 1e-12;
        close(smooth_l1(0.3 - eps, 0.0, 0.3), smooth_l1(0.3, 0.0, 0.3));
    }

    #[test]
    fn reward_margin_cases() {
        close(reward_margin_loss(1.5, 0.0, 1.0), 0.0);
        close(reward_margin_loss(0.4, 0.4, 1.0), 1.0);
        close(reward_margin_loss(0.3, 0.0, 1.0), 0.7);
    }

    #[test]
    fn discounted_target_and_advantage() {
        close(target_value(&[0.7], 0.0, 0.4).unwrap(), 0.7);
        close(target_value(&[1.0, 0.5], 0.9, 0.2).unwrap(), 1.612);
        close(target_value(&[0.25], 1.0, 0.5).unwrap(), 0.75);
        close(advantage(0.7, 0.3), 0.4);
        close(advantage(target_value(&[1.0, 0.5], 0.9, 0.2).unwrap(), 0.5), 1.112);
        assert!(target_value(&[], 0.5, 0.0).is_err());
    }

    #[test]
    fn partial_order_cases() {
        close(partial_order(2.0, 0.5, 1.0), 0.0);
        close(partial_order(0.4, 0.4, 1.0), 1.0);
        close(partial_order(0.3, 0.5, 1.0), 1.2);
        close(partial_order_ratio(0.3, 0.5, 0.5, -0.1, 1.0), -1.2);
        close(partial_order_ratio(0.3, 0.5, -0.5, -0.1, 1.0), -0.8);
        assert_eq!(OrderBranch::select(-0.1, -0.1), OrderBranch::Reinforce);
    }

    #[test]
    fn policy_losses() {
        close(policy_loss_partial(&[-1.2], &[0.5]).unwrap(), 0.6);
        close(policy_loss_partial(&[0.0, 0.0], &[1.0, -2.0]).unwrap(), 0.0);
        close(policy_loss_partial(&[-1.0, 3.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(policy_loss_partial(&[1.0], &[1.0, 2.0]).is_err());

        close(original_ratio(0.3, 0.3).unwrap(), 1.0);
        close(original_ratio(0.8, 0.4).unwrap(), 2.0);
        assert!(original_ratio(0.5, 0.0).is_err());

        close(clipped_policy_loss(&[1.0, 1.0], &[0.5, -1.5], 0.2).unwrap(), 0.5);
        close(clipped_policy_loss(&[2.0], &[1.0], 0.2).unwrap(), -1.2);
        close(clipped_policy_loss(&[0.5], &[-1.0], 0.2).unwrap(), 0.8);
    }

    #[test]
    fn value_losses() {
        close(value_loss(&[0.3, 0.1], &[0.3, 0.1]).unwrap(), 0.0);
        close(value_loss(&[1.0], &[0.0]).unwrap(), 1.0);
        close(value_loss(&[0.5, 1.5], &[0.0, 1.0]).unwrap(), 0.25);
        assert!(value_loss(&[1.0], &[]).is_err());
    }

    #[test]
    fn entropy_and_kl() {
        close(entropy_bonus(&[[0.5, 0.5]]).unwrap(), std::f64::consts::LN_2);
        close(entropy_bonus(&[[1.0, 0.0]]).unwrap(), 0.0);
        close(entropy_bonus(&[[0.8, 0.2]]).unwrap(), 0.500_402);
        assert!(entropy_bonus(&[[1.2, -0.2]]).is_err());

        close(kl_penalty(&[[0.3, 0.7]], &[[0.3, 0.7]]).unwrap(), 0.0);
        close(kl_penalty(&[[0.5, 0.5]], &[[0.8, 0.2]]).unwrap(), 0.223_144);
        assert!(kl_penalty(&[[0.5, 0.5]], &[[1.0, 0.0]]).is_err());
        assert!(kl_penalty(&[[0.9, 0.1]], &[[0.2, 0.8]]).unwrap() >= 0.0);
    }

    #[test]
    fn total_loss_placements() {
        let w = LossWeights { value: 1.0, entropy: 1e-3, kl: 1e-3 };
        close(total_loss(LossParts::default(), w, KlPlacement::InLoss), 0.0);
        let parts = LossParts { policy: 0.6, value: 0.25, entropy: 0.69, kl: 0.22 };
        close(total_loss(parts, w, KlPlacement::InLoss), 0.849_530);
        close(total_loss(parts, w, KlPlacement::SubtractedFromReward), 0.849_310);
        let bare = LossWeights { value: 2.0, entropy: 0.0, kl: 0.0 };
        close(total_loss(parts, bare, KlPlacement::InLoss), 0.6 + 2.0 * 0.25);
    }
}
