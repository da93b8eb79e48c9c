use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2D;
use crate::error::{Error, Result};

static NEXT_PARAMS_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_PARAMS_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// One affine layer: `y = W x + b`, with `W` shaped `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor2D,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weight: Tensor2D, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Length {
                what: "bias vs weight rows",
                left: bias.len(),
                right: weight.rows(),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor2D::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_width(), self.output_width())
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.weight.same_shape(&other.weight) && self.bias.len() == other.bias.len()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.data().iter().chain(self.bias.iter())
    }
}

/// Trainable MLP parameters together with their AdamW state.
///
/// Hidden layers are followed by `activation`; the last layer is linear
/// unless `activate_output` is set.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScorerParams {
    layers: Vec<Dense>,
    activation: Activation,
    activate_output: bool,
    first_moments: Vec<Dense>,
    second_moments: Vec<Dense>,
    step: u64,
    #[serde(skip, default = "fresh_id")]
    id: u64,
    #[serde(skip)]
    generation: u64,
}

impl Clone for ScorerParams {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            activation: self.activation,
            activate_output: self.activate_output,
            first_moments: self.first_moments.clone(),
            second_moments: self.second_moments.clone(),
            step: self.step,
            id: fresh_id(),
            generation: 0,
        }
    }
}

impl PartialEq for ScorerParams {
    /// Compares weights, optimizer state and step; identity stamps are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.activation == other.activation
            && self.activate_output == other.activate_output
            && self.first_moments == other.first_moments
            && self.second_moments == other.second_moments
            && self.step == other.step
    }
}

impl ScorerParams {
    pub fn from_layers(
        layers: Vec<Dense>,
        activation: Activation,
        activate_output: bool,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::Shape {
                    layer: i + 1,
                    expected: pair[0].output_width(),
                    got: pair[1].input_width(),
                });
            }
        }
        let zeros: Vec<Dense> = layers.iter().map(Dense::zeros_like).collect();
        Ok(Self {
            first_moments: zeros.clone(),
            second_moments: zeros,
            layers,
            activation,
            activate_output,
            step: 0,
            id: fresh_id(),
            generation: 0,
        })
    }

    /// Glorot-uniform weights, zero biases. `widths` lists every layer boundary,
    /// e.g. `[in, hidden, out]`.
    pub fn init<R: Rng + ?Sized>(
        widths: &[usize],
        activation: Activation,
        activate_output: bool,
        rng: &mut R,
    ) -> Result<Self> {
        Self::init_scaled(widths, activation, activate_output, 1.0, rng)
    }

    /// Like [`ScorerParams::init`] with the weight range multiplied by `scale`.
    pub fn init_scaled<R: Rng + ?Sized>(
        widths: &[usize],
        activation: Activation,
        activate_output: bool,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Dense {
                    weight: Tensor2D::new(fan_out, fan_in, data).expect("sized above"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self::from_layers(layers, activation, activate_output)
    }

    pub fn zeros(widths: &[usize], activation: Activation, activate_output: bool) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        let layers = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self::from_layers(layers, activation, activate_output)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable weight access. Any gradients recorded before this call become stale.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn activate_output(&self) -> bool {
        self.activate_output
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Dense] {
        &self.first_moments
    }

    pub fn second_moments(&self) -> &[Dense] {
        &self.second_moments
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Flattened weights then biases, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    /// Overwrites parameters from the layout produced by [`ScorerParams::flat`].
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Length {
                what: "flat parameter vector",
                left: values.len(),
                right: self.num_parameters(),
            });
        }
        let mut it = values.iter().copied();
        for layer in self.layers_mut() {
            for w in layer.weight.data_mut() {
                *w = it.next().expect("length checked");
            }
            for b in &mut layer.bias {
                *b = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub(crate) fn stamp(&self) -> (u64, u64) {
        (self.id, self.generation)
    }

    pub(crate) fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_width() {
            return Err(Error::Shape {
                layer: 0,
                expected: self.input_width(),
                got: width,
            });
        }
        Ok(())
    }

    /// Plain forward evaluation without recording a tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let last = self.layers.len() - 1;
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.weight.matvec(&x);
            for (v, b) in y.iter_mut().zip(&layer.bias) {
                *v += b;
            }
            if i < last || self.activate_output {
                for v in &mut y {
                    *v = self.activation.apply(*v);
                }
            }
            x = y;
        }
        Ok(x)
    }

    pub(crate) fn apply_update(
        &mut self,
        grads: &ParamGrads,
        cfg: &super::adam::AdamConfig,
    ) -> Result<()> {
        if grads.stamp != self.stamp() {
            return Err(Error::StaleTape);
        }
        if grads.layers.len() != self.layers.len()
            || grads.layers.iter().zip(&self.layers).any(|(g, l)| !g.same_shape(l))
        {
            return Err(Error::invalid("gradient shapes do not match parameters"));
        }
        if grads.layers.iter().flat_map(Dense::values).any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        let decay = cfg.lr * cfg.weight_decay;

        let update = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *w -= decay * *w;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        };

        for (((layer, g), m), v) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moments)
            .zip(&mut self.second_moments)
        {
            for (((w, &gw), mw), vw) in layer
                .weight
                .data_mut()
                .iter_mut()
                .zip(g.weight.data())
                .zip(m.weight.data_mut())
                .zip(v.weight.data_mut())
            {
                update(w, gw, mw, vw);
            }
            for (((b, &gb), mb), vb) in layer
                .bias
                .iter_mut()
                .zip(&g.bias)
                .zip(&mut m.bias)
                .zip(&mut v.bias)
            {
                update(b, gb, mb, vb);
            }
        }
        self.generation += 1;
        Ok(())
    }
}

/// Gradients for one bound [`ScorerParams`], shaped like its layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub(crate) stamp: (u64, u64),
    pub layers: Vec<Dense>,
}

impl ParamGrads {
    pub(crate) fn zeros_for(params: &ScorerParams) -> Self {
        Self {
            stamp: params.stamp(),
            layers: params.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    /// Flattened in the same layout as [`ScorerParams::flat`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    /// Sums another gradient for the same parameters into this one.
    pub fn accumulate(&mut self, other: &ParamGrads) -> Result<()> {
        if self.stamp != other.stamp {
            return Err(Error::StaleTape);
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().flat_map(Dense::values).all(|&v| v == 0.0)
    }
}
