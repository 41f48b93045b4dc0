use rand::Rng;

use crate::error::{check_finite, check_len, Error, Result};
use crate::numeric::{Activation, DenseNet, Parameters, Trace};

/// One affine coupling layer on `R^D` conditioned on `R^m`.
///
/// With `h = (x[..d], cond)`:
/// `y[..d] = x[..d]`, `y[d..] = x[d..] * exp(s(h)) + t(h)`,
/// where `s = bound * tanh(raw_s / bound)` keeps the log-scale bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    dim: usize,
    split: usize,
    cond_dim: usize,
    scale_bound: f64,
    scale_net: DenseNet,
    translate_net: DenseNet,
}

/// Intermediate values of a coupling forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct CouplingTrace {
    input: Vec<f64>,
    output: Vec<f64>,
    /// Clamped log-scale, length `D - d`.
    scale: Vec<f64>,
    scale_trace: Trace,
    translate_trace: Trace,
}

impl CouplingTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn log_det(&self) -> f64 {
        self.scale.iter().sum()
    }
}

impl CouplingLayer {
    /// Builds a layer with split `floor(D/2)` whose scale and translation nets
    /// have zeroed output layers, so the layer starts as the identity map.
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        cond_dim: usize,
        hidden_widths: &[usize],
        scale_bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("coupling layers need D >= 2, got {dim}")));
        }
        let split = dim / 2;
        let mut widths = vec![split + cond_dim];
        widths.extend_from_slice(hidden_widths);
        widths.push(dim - split);
        let mut scale_net = DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng)?;
        let mut translate_net =
            DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng)?;
        scale_net.zero_output_layer();
        translate_net.zero_output_layer();
        Self::from_nets(dim, split, cond_dim, scale_net, translate_net, scale_bound)
    }

    pub fn from_nets(
        dim: usize,
        split: usize,
        cond_dim: usize,
        scale_net: DenseNet,
        translate_net: DenseNet,
        scale_bound: f64,
    ) -> Result<Self> {
        if dim < 2 || split == 0 || split >= dim {
            return Err(Error::Config(format!(
                "coupling split must satisfy 1 <= d < D, got d={split}, D={dim}"
            )));
        }
        if !(scale_bound > 0.0 && scale_bound.is_finite()) {
            return Err(Error::Config(format!("scale bound must be positive, got {scale_bound}")));
        }
        for (name, net) in [("scale", &scale_net), ("translate", &translate_net)] {
            if net.input_dim() != split + cond_dim || net.output_dim() != dim - split {
                return Err(Error::Config(format!(
                    "{name} net maps R^{} -> R^{}, coupling needs R^{} -> R^{}",
                    net.input_dim(),
                    net.output_dim(),
                    split + cond_dim,
                    dim - split
                )));
            }
        }
        Ok(Self {
            dim,
            split,
            cond_dim,
            scale_bound,
            scale_net,
            translate_net,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn scale_bound(&self) -> f64 {
        self.scale_bound
    }

    pub fn scale_net(&self) -> &DenseNet {
        &self.scale_net
    }

    pub fn scale_net_mut(&mut self) -> &mut DenseNet {
        &mut self.scale_net
    }

    pub fn translate_net(&self) -> &DenseNet {
        &self.translate_net
    }

    pub fn translate_net_mut(&mut self) -> &mut DenseNet {
        &mut self.translate_net
    }

    fn check_inputs(&self, x: &[f64], cond: &[f64], what: &'static str) -> Result<()> {
        check_len(what, self.dim, x.len())?;
        check_len("coupling conditioning vector", self.cond_dim, cond.len())?;
        check_finite(|| format!("{what} (D={}, d={})", self.dim, self.split), x)?;
        check_finite(|| "coupling conditioning vector".to_string(), cond)
    }

    fn conditioner_input(&self, pass: &[f64], cond: &[f64]) -> Vec<f64> {
        let mut h = Vec::with_capacity(self.split + self.cond_dim);
        h.extend_from_slice(pass);
        h.extend_from_slice(cond);
        h
    }

    fn clamp_scale(&self, raw: f64) -> f64 {
        self.scale_bound * (raw / self.scale_bound).tanh()
    }

    /// Returns `(log_scale, translation)` for a pass-through block.
    fn scale_translate(&self, pass: &[f64], cond: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.conditioner_input(pass, cond);
        let s = self.scale_net.forward(&h)?;
        let t = self.translate_net.forward(&h)?;
        Ok((s.into_iter().map(|r| self.clamp_scale(r)).collect(), t))
    }

    pub fn forward(&self, g: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(g, cond, "coupling forward input")?;
        let (s, t) = self.scale_translate(&g[..self.split], cond)?;
        let mut out = g.to_vec();
        for ((y, si), ti) in out[self.split..].iter_mut().zip(&s).zip(&t) {
            *y = *y * si.exp() + ti;
        }
        check_finite(|| format!("coupling forward output (D={}, d={})", self.dim, self.split), &out)?;
        Ok(out)
    }

    pub fn inverse(&self, a: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(a, cond, "coupling inverse input")?;
        let (s, t) = self.scale_translate(&a[..self.split], cond)?;
        let mut out = a.to_vec();
        for ((x, si), ti) in out[self.split..].iter_mut().zip(&s).zip(&t) {
            *x = (*x - ti) * (-si).exp();
        }
        check_finite(|| format!("coupling inverse output (D={}, d={})", self.dim, self.split), &out)?;
        Ok(out)
    }

    /// `log|det J|` of the forward map at `g`: the sum of clamped log-scales.
    pub fn log_det(&self, g: &[f64], cond: &[f64]) -> Result<f64> {
        self.check_inputs(g, cond, "coupling log-det input")?;
        let (s, _) = self.scale_translate(&g[..self.split], cond)?;
        Ok(s.iter().sum())
    }

    pub fn forward_trace(&self, g: &[f64], cond: &[f64]) -> Result<CouplingTrace> {
        self.check_inputs(g, cond, "coupling forward input")?;
        let h = self.conditioner_input(&g[..self.split], cond);
        let scale_trace = self.scale_net.forward_trace(&h)?;
        let translate_trace = self.translate_net.forward_trace(&h)?;
        let scale: Vec<f64> = scale_trace.output().iter().map(|&r| self.clamp_scale(r)).collect();
        let mut output = g.to_vec();
        for ((y, si), ti) in output[self.split..].iter_mut().zip(&scale).zip(translate_trace.output()) {
            *y = *y * si.exp() + ti;
        }
        check_finite(|| format!("coupling forward output (D={}, d={})", self.dim, self.split), &output)?;
        Ok(CouplingTrace {
            input: g.to_vec(),
            output,
            scale,
            scale_trace,
            translate_trace,
        })
    }

    /// Backpropagates `upstream = dL/dy` through a recorded forward pass.
    ///
    /// Parameter gradients are added into `grads` (scale net block first,
    /// then translate net). Returns `(dL/dg, dL/dcond)`.
    pub fn backward_accumulate(
        &self,
        trace: &CouplingTrace,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("coupling backward upstream", self.dim, upstream.len())?;
        check_len("coupling gradient buffer", self.num_params(), grads.len())?;
        let d = self.split;
        let (up_pass, up_tr) = upstream.split_at(d);

        let mut d_input = vec![0.0; self.dim];
        d_input[..d].copy_from_slice(up_pass);
        let mut d_raw_scale = Vec::with_capacity(self.dim - d);
        for (i, (&u, &s)) in up_tr.iter().zip(&trace.scale).enumerate() {
            let e = s.exp();
            d_input[d + i] = u * e;
            // ds/draw = 1 - tanh^2(raw/bound) = 1 - (s/bound)^2
            let ratio = s / self.scale_bound;
            d_raw_scale.push(u * trace.input[d + i] * e * (1.0 - ratio * ratio));
        }

        let n_scale = self.scale_net.num_params();
        let (g_scale, g_translate) = grads.split_at_mut(n_scale);
        let dh_s = self
            .scale_net
            .backward_accumulate(&trace.scale_trace, &d_raw_scale, g_scale)?;
        let dh_t = self
            .translate_net
            .backward_accumulate(&trace.translate_trace, up_tr, g_translate)?;

        for i in 0..d {
            d_input[i] += dh_s[i] + dh_t[i];
        }
        let d_cond = dh_s[d..].iter().zip(&dh_t[d..]).map(|(a, b)| a + b).collect();
        Ok((d_input, d_cond))
    }
}

impl Parameters for CouplingLayer {
    fn param_blocks(&self) -> Vec<&[f64]> {
        let mut v = self.scale_net.param_blocks();
        v.extend(self.translate_net.param_blocks());
        v
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.scale_net.param_blocks_mut();
        v.extend(self.translate_net.param_blocks_mut());
        v
    }

    fn num_params(&self) -> usize {
        self.scale_net.num_params() + self.translate_net.num_params()
    }

    fn describe_param(&self, index: usize) -> String {
        let n = self.scale_net.num_params();
        if index < n {
            format!("scale net {}", self.scale_net.describe_param(index))
        } else {
            format!("translate net {}", self.translate_net.describe_param(index - n))
        }
    }
}
