//! Define-by-run reverse-mode tape.
//!
//! Every value on the tape is a dense vector. Nodes are appended in
//! evaluation order, so the node list is already topologically sorted and a
//! single reverse sweep computes all gradients. Parameters are bound by
//! shared reference for the lifetime of the tape; the returned gradients
//! carry the parameters' identity stamp so they cannot be applied after the
//! parameters have changed.

use super::params::{ParamGrads, ScorerParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine {
        input: NodeId,
        slot: usize,
        layer: usize,
    },
    Relu(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    Log(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Mean(NodeId),
    MaxConst(NodeId, f64),
    Concat(Vec<NodeId>),
    Select(NodeId, usize),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node>,
    bound: Vec<&'p ScorerParams>,
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// First element of a node's value; convenient for scalar losses.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn bind(&mut self, params: &'p ScorerParams) -> ParamSlot {
        self.bound.push(params);
        ParamSlot(self.bound.len() - 1)
    }

    /// A leaf: an input or constant. Gradients w.r.t. leaves are reported too.
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.leaf(vec![x])
    }

    pub fn affine(&mut self, input: NodeId, slot: ParamSlot, layer: usize) -> Result<NodeId> {
        let params = self.bound[slot.0];
        let dense = params
            .layers()
            .get(layer)
            .ok_or_else(|| Error::invalid(format!("layer {layer} out of range")))?;
        let x = &self.nodes[input.0].value;
        if x.len() != dense.input_width() {
            return Err(Error::Shape {
                layer,
                expected: dense.input_width(),
                got: x.len(),
            });
        }
        let mut y = dense.weight.matvec(x);
        for (v, b) in y.iter_mut().zip(&dense.bias) {
            *v += b;
        }
        Ok(self.push(
            y,
            Op::Affine {
                input,
                slot: slot.0,
                layer,
            },
        ))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().map(|x| x.max(0.0)).collect();
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let v = exps.into_iter().map(|e| e / total).collect();
        self.push(v, Op::Softmax(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().map(|x| x.ln()).collect();
        self.push(v, Op::Log(a))
    }

    fn broadcast(&self, a: NodeId, b: NodeId) -> Result<usize> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        match (la, lb) {
            _ if la == lb => Ok(la),
            (1, n) | (n, 1) => Ok(n),
            _ => Err(Error::Length {
                what: "elementwise operands",
                left: la,
                right: lb,
            }),
        }
    }

    fn at(v: &[f64], i: usize) -> f64 {
        if v.len() == 1 {
            v[0]
        } else {
            v[i]
        }
    }

    /// Elementwise sum; a length-1 operand broadcasts.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let n = self.broadcast(a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let v = (0..n).map(|i| Self::at(va, i) + Self::at(vb, i)).collect();
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// Elementwise product; a length-1 operand broadcasts.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let n = self.broadcast(a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let v = (0..n).map(|i| Self::at(va, i) * Self::at(vb, i)).collect();
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let m = x.iter().sum::<f64>() / x.len() as f64;
        self.push(vec![m], Op::Mean(a))
    }

    /// `max(a, c)` elementwise. At `a == c` the gradient follows `a`.
    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).iter().map(|x| x.max(c)).collect();
        self.push(v, Op::MaxConst(a, c))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let v = parts.iter().flat_map(|p| self.value(*p).iter().copied()).collect();
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn select(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        let x = self.value(a);
        let v = *x.get(index).ok_or_else(|| {
            Error::invalid(format!("select index {index} out of range {}", x.len()))
        })?;
        Ok(self.push(vec![v], Op::Select(a, index)))
    }

    // Composites built from the primitives above.

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let c = self.scalar(s);
        self.mul(a, c).expect("scalar broadcasts")
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let c = self.scalar(s);
        self.add(a, c).expect("scalar broadcasts")
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a).expect("same node")
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let m = self.mean(a);
        self.scale(m, n)
    }

    /// `max(0, margin − z)`.
    pub fn hinge(&mut self, z: NodeId, margin: f64) -> NodeId {
        let nz = self.neg(z);
        let shifted = self.add_scalar(nz, margin);
        self.max_const(shifted, 0.0)
    }

    /// Reverse sweep from `output`, seeded with `seed` (same length as the output).
    pub fn backward(&self, output: NodeId, seed: &[f64]) -> Result<Gradients> {
        let out_len = self.value(output).len();
        if seed.len() != out_len {
            return Err(Error::Length {
                what: "output gradient vs output",
                left: seed.len(),
                right: out_len,
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed.to_vec());
        let mut params: Vec<ParamGrads> =
            self.bound.iter().map(|p| ParamGrads::zeros_for(p)).collect();

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Affine { input, slot, layer } => {
                    let dense = &self.bound[*slot].layers()[*layer];
                    let x = &self.nodes[input.0].value;
                    let pg = &mut params[*slot].layers[*layer];
                    pg.weight.add_outer(&g, x);
                    for (b, gi) in pg.bias.iter_mut().zip(&g) {
                        *b += gi;
                    }
                    accumulate(&mut grads, *input, dense.weight.matvec_transposed(&g));
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gi, yi)| gi * (1.0 - yi * yi))
                        .collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    let d = g.iter().zip(y).map(|(gi, yi)| yi * (gi - dot)).collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Log(a) => {
                    let x = &self.nodes[a.0].value;
                    let d = g.iter().zip(x).map(|(gi, xi)| gi / xi).collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Add(a, b) => {
                    for operand in [*a, *b] {
                        let len = self.nodes[operand.0].value.len();
                        accumulate(&mut grads, operand, reduce_to(&g, len));
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| gi * Self::at(vb, i))
                        .collect();
                    let db: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| gi * Self::at(va, i))
                        .collect();
                    accumulate(&mut grads, *a, reduce_to(&da, va.len()));
                    accumulate(&mut grads, *b, reduce_to(&db, vb.len()));
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.len();
                    accumulate(&mut grads, *a, vec![g[0] / n as f64; n]);
                }
                Op::MaxConst(a, c) => {
                    let x = &self.nodes[a.0].value;
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(gi, xi)| if *xi >= *c { *gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        accumulate(&mut grads, *p, g[offset..offset + len].to_vec());
                        offset += len;
                    }
                }
                Op::Select(a, index) => {
                    let mut d = vec![0.0; self.nodes[a.0].value.len()];
                    d[*index] = g[0];
                    accumulate(&mut grads, *a, d);
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }

        Ok(Gradients {
            leaves: grads,
            params,
        })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, d: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(d) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    if len == g.len() {
        g.to_vec()
    } else {
        vec![g.iter().sum()]
    }
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    leaves: Vec<Option<Vec<f64>>>,
    params: Vec<ParamGrads>,
}

impl Gradients {
    /// Gradient w.r.t. a leaf node; `None` if the leaf does not feed the output.
    pub fn wrt(&self, leaf: NodeId) -> Option<&[f64]> {
        self.leaves.get(leaf.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, slot: ParamSlot) -> &ParamGrads {
        &self.params[slot.0]
    }

    pub fn into_params(self) -> Vec<ParamGrads> {
        self.params
    }
}
