//! Loss builders on the autodiff tape, mirroring [`super::losses`].

use super::config::KlPlacement;
use super::losses::{LossWeights, OrderBranch};
use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};

fn scalar_of(tape: &Tape<'_>, node: NodeId, what: &str) -> Result<f64> {
    match tape.value(node) {
        [v] => Ok(*v),
        other => Err(Error::invalid(format!("{what}: expected a scalar node, got length {}", other.len()))),
    }
}

fn check_batch(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Length { what, left: a, right: b });
    }
    if a == 0 {
        return Err(Error::invalid(format!("{what}: empty batch")));
    }
    Ok(())
}

/// Mean of a list of scalar nodes.
pub fn mean_of(tape: &mut Tape<'_>, nodes: &[NodeId]) -> Result<NodeId> {
    if nodes.is_empty() {
        return Err(Error::invalid("mean of an empty batch"));
    }
    let joined = tape.concat(nodes);
    Ok(tape.mean(joined))
}

/// Whichever of two scalar nodes is smaller in the forward pass.
fn min_node(tape: &Tape<'_>, a: NodeId, b: NodeId) -> NodeId {
    if tape.value(a)[0] <= tape.value(b)[0] {
        a
    } else {
        b
    }
}

pub fn smooth_l1_node(tape: &mut Tape<'_>, prediction: NodeId, target: f64, beta: f64) -> Result<NodeId> {
    let d = scalar_of(tape, prediction, "smooth_l1")? - target;
    let resid = tape.add_scalar(prediction, -target);
    Ok(if d.abs() < beta {
        let sq = tape.square(resid);
        tape.scale(sq, 0.5 / beta)
    } else {
        let abs = tape.scale(resid, d.signum());
        tape.add_scalar(abs, -0.5 * beta)
    })
}

pub fn reward_margin_node(
    tape: &mut Tape<'_>,
    reward_correct: NodeId,
    reward_flipped: NodeId,
    margin: f64,
) -> Result<NodeId> {
    let gap = tape.sub(reward_correct, reward_flipped)?;
    Ok(tape.hinge(gap, margin))
}

pub fn partial_order_ratio_node(
    tape: &mut Tape<'_>,
    first: NodeId,
    second: NodeId,
    advantage: f64,
    delta: f64,
    margin: f64,
) -> Result<NodeId> {
    let (high, low) = match OrderBranch::select(advantage, delta) {
        OrderBranch::Reinforce => (first, second),
        OrderBranch::Reverse => (second, first),
    };
    let gap = tape.sub(high, low)?;
    let h = tape.hinge(gap, margin);
    Ok(tape.neg(h))
}

pub fn policy_loss_partial_node(tape: &mut Tape<'_>, ratios: &[NodeId], advantages: &[f64]) -> Result<NodeId> {
    check_batch("ratios vs advantages", ratios.len(), advantages.len())?;
    let r = tape.concat(ratios);
    let w = tape.leaf(advantages.iter().map(|a| a.abs()).collect());
    let prod = tape.mul(r, w)?;
    let m = tape.mean(prod);
    Ok(tape.neg(m))
}

/// Two-way softmax over `(first, second) / temperature`.
pub fn policy_dist_node(tape: &mut Tape<'_>, first: NodeId, second: NodeId, temperature: f64) -> NodeId {
    let logits = tape.concat(&[first, second]);
    let scaled = tape.scale(logits, 1.0 / temperature);
    tape.softmax(scaled)
}

pub fn original_ratio_node(tape: &mut Tape<'_>, prob_new: NodeId, prob_old: f64) -> Result<NodeId> {
    if prob_old.is_nan() || prob_old <= 0.0 {
        return Err(Error::invalid(format!("old probability must be positive, got {prob_old}")));
    }
    Ok(tape.scale(prob_new, 1.0 / prob_old))
}

pub fn clipped_policy_loss_node(
    tape: &mut Tape<'_>,
    ratios: &[NodeId],
    advantages: &[f64],
    epsilon: f64,
) -> Result<NodeId> {
    check_batch("ratios vs advantages", ratios.len(), advantages.len())?;
    let mut terms = Vec::with_capacity(ratios.len());
    for (&r, &a) in ratios.iter().zip(advantages) {
        let lower = tape.max_const(r, 1.0 - epsilon);
        let neg = tape.neg(lower);
        let capped = tape.max_const(neg, -(1.0 + epsilon));
        let clipped = tape.neg(capped);
        let plain = tape.scale(r, a);
        let bounded = tape.scale(clipped, a);
        terms.push(min_node(tape, plain, bounded));
    }
    let m = mean_of(tape, &terms)?;
    Ok(tape.neg(m))
}

pub fn value_loss_node(tape: &mut Tape<'_>, values: &[NodeId], targets: &[f64]) -> Result<NodeId> {
    check_batch("values vs targets", values.len(), targets.len())?;
    let v = tape.concat(values);
    let t = tape.leaf(targets.to_vec());
    let d = tape.sub(v, t)?;
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

/// Mean entropy of a batch of distribution nodes.
pub fn entropy_node(tape: &mut Tape<'_>, dists: &[NodeId]) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(dists.len());
    for &d in dists {
        let logs = tape.log(d);
        let plogp = tape.mul(d, logs)?;
        let s = tape.sum(plogp);
        terms.push(tape.neg(s));
    }
    mean_of(tape, &terms)
}

/// Mean `KL(old ‖ new)` where `old` is constant.
pub fn kl_node(tape: &mut Tape<'_>, old: &[[f64; 2]], new: &[NodeId]) -> Result<NodeId> {
    check_batch("old vs new distributions", old.len(), new.len())?;
    let mut terms = Vec::with_capacity(old.len());
    for (o, &n) in old.iter().zip(new) {
        let self_term: f64 = o.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum();
        let logs = tape.log(n);
        let w = tape.leaf(o.to_vec());
        let cross = tape.mul(w, logs)?;
        let s = tape.sum(cross);
        let neg = tape.neg(s);
        terms.push(tape.add_scalar(neg, self_term));
    }
    mean_of(tape, &terms)
}

/// Loss component nodes; `kl` may be absent when it is folded into rewards.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub policy: NodeId,
    pub value: NodeId,
    pub entropy: NodeId,
    pub kl: NodeId,
}

pub fn total_loss_node(
    tape: &mut Tape<'_>,
    parts: LossNodes,
    weights: LossWeights,
    placement: KlPlacement,
) -> Result<NodeId> {
    let v = tape.scale(parts.value, weights.value);
    let e = tape.scale(parts.entropy, -weights.entropy);
    let pv = tape.add(parts.policy, v)?;
    let base = tape.add(pv, e)?;
    match placement {
        KlPlacement::InLoss => {
            let k = tape.scale(parts.kl, weights.kl);
            tape.add(base, k)
        }
        KlPlacement::SubtractedFromReward => Ok(base),
    }
}
