use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{check_finite, check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// Row-major, shape (fan_out, fan_in).
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// Fixed, non-trainable input normalization `x' = (x - shift) * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputAffine {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Fully connected feed-forward network.
///
/// Hidden layers share one activation; the output layer has its own. An
/// optional fixed input normalization is applied before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    layers: Vec<Layer>,
    hidden_activation: Activation,
    output_activation: Activation,
    input_affine: Option<InputAffine>,
}

/// Per-layer post-activation values of one forward pass; index 0 is the
/// (normalized) input.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has at least the input")
    }
}

/// Gradients of `upstreamᵀ · output` with respect to every parameter (flat,
/// in [`Parameters`] order) and with respect to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseNet {
    /// Builds a network with fan-in scaled uniform initialization
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, hidden_activation, output_activation)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(
        widths: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!(
                "a dense net needs at least input and output widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive, got {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                fan_in: w[0],
                fan_out: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            hidden_activation,
            output_activation,
            input_affine: None,
        })
    }

    /// Installs a fixed input normalization. It is not a parameter: it is
    /// neither trained nor checkpointed.
    pub fn set_input_affine(&mut self, affine: InputAffine) -> Result<()> {
        check_len("input affine shift", self.input_dim(), affine.shift.len())?;
        check_len("input affine scale", self.input_dim(), affine.scale.len())?;
        self.input_affine = Some(affine);
        Ok(())
    }

    pub fn input_affine(&self) -> Option<&InputAffine> {
        self.input_affine.as_ref()
    }

    fn normalized(&self, input: &[f64]) -> Vec<f64> {
        match &self.input_affine {
            None => input.to_vec(),
            Some(a) => input
                .iter()
                .zip(&a.shift)
                .zip(&a.scale)
                .map(|((x, m), k)| (x - m) * k)
                .collect(),
        }
    }

    /// Zeroes the last layer so the pre-activation output is identically zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.biases.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated at construction")
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    /// Row-major weights of `layer`, shape `(widths[layer+1], widths[layer])`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.layers[layer].weights
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.layers[layer].weights
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.layers[layer].biases
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.layers[layer].biases
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("net_forward input", self.input_dim(), input.len())?;
        let mut x = self.normalized(input);
        for (k, layer) in self.layers.iter().enumerate() {
            x = self.layer_forward(k, layer, &x);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        check_len("net_forward input", self.input_dim(), input.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(self.normalized(input));
        for (k, layer) in self.layers.iter().enumerate() {
            let next = self.layer_forward(k, layer, activations.last().unwrap());
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    #[inline]
    fn layer_forward(&self, k: usize, layer: &Layer, x: &[f64]) -> Vec<f64> {
        let act = self.activation_of(k);
        let mut out = Vec::with_capacity(layer.fan_out);
        for (row, &b) in layer.weights.chunks_exact(layer.fan_in).zip(&layer.biases) {
            out.push(act.apply(b + dot(row, x)));
        }
        out
    }

    /// Gradients of `upstreamᵀ · net(input)`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<GradientBundle> {
        let trace = self.forward_trace(input)?;
        let mut params = vec![0.0; self.num_params()];
        let input = self.backward_accumulate(&trace, upstream, &mut params)?;
        Ok(GradientBundle { params, input })
    }

    /// Backpropagates `upstream` through a recorded trace, adding parameter
    /// gradients into `grads` and returning the input gradient.
    pub fn backward_accumulate(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        check_len("net_backward gradient buffer", self.num_params(), grads.len())?;
        self.backprop(trace, upstream, Some(grads))
    }

    /// Input gradient only; skips the parameter gradients.
    pub fn input_gradient(&self, trace: &Trace, upstream: &[f64]) -> Result<Vec<f64>> {
        self.backprop(trace, upstream, None)
    }

    fn backprop(&self, trace: &Trace, upstream: &[f64], mut grads: Option<&mut [f64]>) -> Result<Vec<f64>> {
        check_len("net_backward upstream", self.output_dim(), upstream.len())?;
        check_len("net_backward trace", self.layers.len() + 1, trace.activations.len())?;

        let offsets = self.block_offsets();
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let act = self.activation_of(k);
            let y = &trace.activations[k + 1];
            let x = &trace.activations[k];
            for (d, &yi) in delta.iter_mut().zip(y) {
                *d *= act.derivative_from_output(yi);
            }
            if let Some(grads) = grads.as_deref_mut() {
                let (w_off, b_off) = offsets[k];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grads[w_off + o * layer.fan_in..w_off + (o + 1) * layer.fan_in];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                    grads[b_off + o] += d;
                }
            }
            let mut prev = vec![0.0; layer.fan_in];
            for (row, &d) in layer.weights.chunks_exact(layer.fan_in).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            delta = prev;
        }
        if let Some(a) = &self.input_affine {
            for (d, k) in delta.iter_mut().zip(&a.scale) {
                *d *= k;
            }
        }
        check_finite(|| "net_backward gradient".to_string(), &delta)?;
        Ok(delta)
    }

    fn block_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = off;
                let b = w + l.weights.len();
                off = b + l.biases.len();
                (w, b)
            })
            .collect()
    }
}

/// Dot product with four independent accumulators so the compiler can
/// vectorize it; the summation order is fixed, so results are deterministic.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Parameters for DenseNet {
    fn param_blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn describe_param(&self, index: usize) -> String {
        let mut off = 0;
        for (k, l) in self.layers.iter().enumerate() {
            if index < off + l.weights.len() {
                let i = index - off;
                return format!("layer {k} weight ({}, {})", i / l.fan_in, i % l.fan_in);
            }
            off += l.weights.len();
            if index < off + l.biases.len() {
                return format!("layer {k} bias {}", index - off);
            }
            off += l.biases.len();
        }
        format!("index {index} (out of range)")
    }
}
