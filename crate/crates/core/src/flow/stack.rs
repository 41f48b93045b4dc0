use rand::Rng;

use super::{CouplingLayer, CouplingTrace};
use crate::error::{check_len, Error, Result};
use crate::numeric::Parameters;

/// Two coupling layers over the goal space, conditioned on the same vector.
///
/// `forward(g, c) = rev(L2(rev(L1(g, c)), c))`: the coordinate order is
/// reversed before the second layer and restored after it, so coordinates
/// passed through by the first layer are transformed by the second, and a
/// freshly built flow is exactly the identity map.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalFlow {
    layers: [CouplingLayer; 2],
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    first: CouplingTrace,
    second: CouplingTrace,
    output: Vec<f64>,
}

impl FlowTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn log_det(&self) -> f64 {
        self.first.log_det() + self.second.log_det()
    }
}

/// Gradients of `upstreamᵀ · flow(g, cond)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGradients {
    pub params: Vec<f64>,
    pub goal: Vec<f64>,
    pub cond: Vec<f64>,
}

fn reversed(v: &[f64]) -> Vec<f64> {
    v.iter().rev().copied().collect()
}

impl ConditionalFlow {
    pub fn new<R: Rng + ?Sized>(
        goal_dim: usize,
        cond_dim: usize,
        hidden_widths: &[usize],
        scale_bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let first = CouplingLayer::new(goal_dim, cond_dim, hidden_widths, scale_bound, rng)?;
        let second = CouplingLayer::new(goal_dim, cond_dim, hidden_widths, scale_bound, rng)?;
        Self::from_layers(first, second)
    }

    pub fn from_layers(first: CouplingLayer, second: CouplingLayer) -> Result<Self> {
        if first.dim() != second.dim() || first.cond_dim() != second.cond_dim() {
            return Err(Error::Config(format!(
                "flow layers disagree on dims: (D={}, m={}) vs (D={}, m={})",
                first.dim(),
                first.cond_dim(),
                second.dim(),
                second.cond_dim()
            )));
        }
        Ok(Self {
            layers: [first, second],
        })
    }

    pub fn goal_dim(&self) -> usize {
        self.layers[0].dim()
    }

    pub fn cond_dim(&self) -> usize {
        self.layers[0].cond_dim()
    }

    pub fn layers(&self) -> &[CouplingLayer; 2] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CouplingLayer; 2] {
        &mut self.layers
    }

    pub fn forward(&self, g: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        let y1 = self.layers[0].forward(g, cond)?;
        let z = self.layers[1].forward(&reversed(&y1), cond)?;
        Ok(reversed(&z))
    }

    /// Exact inverse of [`forward`](Self::forward) for the same `cond`.
    pub fn inverse(&self, a: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        check_len("flow inverse input", self.goal_dim(), a.len())?;
        let p = self.layers[1].inverse(&reversed(a), cond)?;
        self.layers[0].inverse(&reversed(&p), cond)
    }

    /// `log|det ∂forward/∂g|`; the reversals contribute nothing.
    pub fn log_det(&self, g: &[f64], cond: &[f64]) -> Result<f64> {
        let (first, second) = self.layer_log_dets(g, cond)?;
        Ok(first + second)
    }

    pub fn layer_log_dets(&self, g: &[f64], cond: &[f64]) -> Result<(f64, f64)> {
        let first = self.layers[0].log_det(g, cond)?;
        let y1 = self.layers[0].forward(g, cond)?;
        let second = self.layers[1].log_det(&reversed(&y1), cond)?;
        Ok((first, second))
    }

    pub fn forward_trace(&self, g: &[f64], cond: &[f64]) -> Result<FlowTrace> {
        let first = self.layers[0].forward_trace(g, cond)?;
        let second = self.layers[1].forward_trace(&reversed(first.output()), cond)?;
        let output = reversed(second.output());
        Ok(FlowTrace {
            first,
            second,
            output,
        })
    }

    /// Adds parameter gradients into `grads` and returns `(dL/dg, dL/dcond)`.
    pub fn backward_accumulate(
        &self,
        trace: &FlowTrace,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("flow backward upstream", self.goal_dim(), upstream.len())?;
        check_len("flow gradient buffer", self.num_params(), grads.len())?;
        let n0 = self.layers[0].num_params();
        let (g0, g1) = grads.split_at_mut(n0);
        let (dp, dc1) = self.layers[1].backward_accumulate(&trace.second, &reversed(upstream), g1)?;
        let (dg, dc0) = self.layers[0].backward_accumulate(&trace.first, &reversed(&dp), g0)?;
        let dcond = dc0.iter().zip(&dc1).map(|(a, b)| a + b).collect();
        Ok((dg, dcond))
    }

    pub fn backward(&self, g: &[f64], cond: &[f64], upstream: &[f64]) -> Result<FlowGradients> {
        let trace = self.forward_trace(g, cond)?;
        let mut params = vec![0.0; self.num_params()];
        let (goal, cond) = self.backward_accumulate(&trace, upstream, &mut params)?;
        Ok(FlowGradients { params, goal, cond })
    }
}

impl Parameters for ConditionalFlow {
    fn param_blocks(&self) -> Vec<&[f64]> {
        let mut v = self.layers[0].param_blocks();
        v.extend(self.layers[1].param_blocks());
        v
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let [a, b] = &mut self.layers;
        let mut v = a.param_blocks_mut();
        v.extend(b.param_blocks_mut());
        v
    }

    fn num_params(&self) -> usize {
        self.layers[0].num_params() + self.layers[1].num_params()
    }

    fn describe_param(&self, index: usize) -> String {
        let n = self.layers[0].num_params();
        if index < n {
            format!("coupling layer 0 {}", self.layers[0].describe_param(index))
        } else {
            format!("coupling layer 1 {}", self.layers[1].describe_param(index - n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_flow(seed: u64, dim: usize, cond: usize) -> ConditionalFlow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flow = ConditionalFlow::new(dim, cond, &[8, 8], 2.0, &mut rng).unwrap();
        let p: Vec<f64> = (0..flow.num_params()).map(|_| rng.gen_range(-0.4..0.4)).collect();
        flow.set_flat_params(&p).unwrap();
        flow
    }

    #[test]
    fn fresh_flow_is_identity_both_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = ConditionalFlow::new(5, 3, &[16, 16], 2.0, &mut rng).unwrap();
        let g = [1.0, 2.0, 3.0, 4.0, 5.0];
        let c = [0.3, 0.2, 0.1];
        assert_eq!(flow.forward(&g, &c).unwrap(), g);
        assert_eq!(flow.inverse(&g, &c).unwrap(), g);
        assert_eq!(flow.log_det(&g, &c).unwrap(), 0.0);
        let grads = flow.backward(&g, &c, &[1.0, -2.0, 3.0, -4.0, 5.0]).unwrap();
        assert_eq!(grads.goal, vec![1.0, -2.0, 3.0, -4.0, 5.0]);
    }

    #[test]
    fn identity_second_layer_reduces_to_first_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let randomized = random_flow(3, 4, 2);
        let identity = CouplingLayer::new(4, 2, &[8, 8], 2.0, &mut rng).unwrap();
        let flow =
            ConditionalFlow::from_layers(randomized.layers()[0].clone(), identity).unwrap();
        let g = [0.5, -0.5, 1.5, 2.0];
        let c = [0.1, 0.9];
        assert_eq!(flow.forward(&g, &c).unwrap(), flow.layers()[0].forward(&g, &c).unwrap());
    }

    #[test]
    fn forward_matches_composition_oracle() {
        let flow = random_flow(4, 6, 3);
        let g = [0.1, 0.2, 0.3, -0.4, -0.5, 0.6];
        let c = [1.0, 0.0, -1.0];
        let mut y = flow.layers()[0].forward(&g, &c).unwrap();
        y.reverse();
        let mut z = flow.layers()[1].forward(&y, &c).unwrap();
        z.reverse();
        assert_eq!(flow.forward(&g, &c).unwrap(), z);
    }

    #[test]
    fn every_coordinate_is_transformed() {
        for dim in 2..8 {
            let flow = random_flow(10 + dim as u64, dim, 1);
            let g = vec![0.7; dim];
            let a = flow.forward(&g, &[0.4]).unwrap();
            for i in 0..dim {
                assert_ne!(a[i], g[i], "coordinate {i} of D={dim} untouched");
            }
        }
    }

    #[test]
    fn log_det_is_sum_of_layer_terms() {
        let flow = random_flow(5, 4, 2);
        let (g, c) = ([0.3, 0.1, -0.2, 0.9], [0.5, 0.5]);
        let (a, b) = flow.layer_log_dets(&g, &c).unwrap();
        assert_eq!(flow.log_det(&g, &c).unwrap(), a + b);
        let trace = flow.forward_trace(&g, &c).unwrap();
        assert!((trace.log_det() - (a + b)).abs() < 1e-15);
    }

    #[test]
    fn conditioning_changes_output() {
        let flow = random_flow(6, 4, 2);
        let g = [0.3, 0.1, -0.2, 0.9];
        let a = flow.forward(&g, &[0.0, 0.0]).unwrap();
        let b = flow.forward(&g, &[1.0, -1.0]).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let flow = random_flow(7, 3, 2);
        let grads = flow.backward(&[0.1, 0.2, 0.3], &[0.4, 0.5], &[0.0; 3]).unwrap();
        assert!(grads.params.iter().chain(&grads.goal).chain(&grads.cond).all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..10 {
            let flow = random_flow(300 + seed, 5, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = flow.num_params();
            let mut point = flow.flat_params();
            point.extend(&g);
            point.extend(&c);
            let f = |p: &[f64]| {
                let mut fl = flow.clone();
                fl.set_flat_params(&p[..n])?;
                let (gx, cx) = p[n..].split_at(5);
                let v = fl.forward(gx, cx)?.iter().zip(&u).map(|(a, b)| a * b).sum();
                let gr = fl.backward(gx, cx, &u)?;
                let mut all = gr.params;
                all.extend(gr.goal);
                all.extend(gr.cond);
                Ok((v, all))
            };
            let err = grad_check(f, &point, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }
}
