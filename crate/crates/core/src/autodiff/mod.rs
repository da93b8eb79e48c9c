//! Small dense tensors, a reverse-mode tape, MLP parameters and AdamW.

mod adam;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use params::{Activation, Dense, ParamGrads, ScorerParams};
pub use tape::{Gradients, NodeId, ParamSlot, Tape};
pub use tensor::Tensor2D;

use crate::error::Result;

impl ScorerParams {
    /// Records the MLP forward pass for `input` on `tape`.
    pub fn forward_node(&self, tape: &mut Tape<'_>, slot: ParamSlot, input: NodeId) -> Result<NodeId> {
        self.check_input(tape.value(input).len())?;
        let last = self.layers().len() - 1;
        let mut x = input;
        for layer in 0..self.layers().len() {
            x = tape.affine(x, slot, layer)?;
            if layer < last || self.activate_output() {
                x = match self.activation() {
                    Activation::Relu => tape.relu(x),
                    Activation::Tanh => tape.tanh(x),
                };
            }
        }
        Ok(x)
    }
}

/// Runs `params` on `input` with a fresh tape.
pub fn mlp_forward<'p>(
    params: &'p ScorerParams,
    input: &[f64],
) -> Result<(Vec<f64>, Tape<'p>, NodeId, ParamSlot)> {
    params.check_input(input.len())?;
    let mut tape = Tape::new();
    let slot = tape.bind(params);
    let x = tape.leaf(input.to_vec());
    let out = params.forward_node(&mut tape, slot, x)?;
    Ok((tape.value(out).to_vec(), tape, out, slot))
}
