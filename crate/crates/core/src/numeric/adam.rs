use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
        }
    }

    pub fn for_params<P: Parameters + ?Sized>(params: &P, config: AdamConfig) -> Self {
        Self::new(params.num_params(), config)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Applies one Adam update in place.
    ///
    /// A non-finite gradient rejects the whole step before anything is
    /// mutated, so the parameters and moments stay at their last good values.
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &[f64]) -> Result<()> {
        check_len("adam_step gradients", self.first_moment.len(), grads.len())?;
        check_len("adam_step parameters", self.first_moment.len(), params.num_params())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("adam gradient at {}", params.describe_param(i)),
            });
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        let mut i = 0;
        for block in params.param_blocks_mut() {
            for p in block.iter_mut() {
                let g = grads[i];
                let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
                let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
                self.first_moment[i] = m;
                self.second_moment[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                i += 1;
            }
        }

        if let Some(i) = params.flat_params().iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("parameter after adam step at {}", params.describe_param(i)),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Activation, DenseNet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> DenseNet {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        DenseNet::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap()
    }

    #[test]
    fn zero_gradient_is_noop_and_counts() {
        let mut n = net();
        let before = n.flat_params();
        let mut st = AdamState::for_params(&n, AdamConfig::default());
        st.step(&mut n, &vec![0.0; before.len()]).unwrap();
        assert_eq!(n.flat_params(), before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // After one step m_hat = g and v_hat = g^2, so the update is
        // -lr * g / (|g| + eps).
        let mut n = net();
        let before = n.flat_params();
        let grads: Vec<f64> = (0..before.len()).map(|i| (i as f64 - 7.5) * 0.3).collect();
        let cfg = AdamConfig::with_lr(0.01);
        let mut st = AdamState::for_params(&n, cfg);
        st.step(&mut n, &grads).unwrap();
        for ((after, b), g) in n.flat_params().iter().zip(&before).zip(&grads) {
            let expected = b - 0.01 * g / (g.abs() + 1e-8);
            assert!((after - expected).abs() < 1e-15, "{after} vs {expected}");
        }
    }

    #[test]
    fn second_moment_grows_with_repeated_steps() {
        let mut n = net();
        let grads = vec![0.5; n.num_params()];
        let mut st = AdamState::for_params(&n, AdamConfig::default());
        st.step(&mut n, &grads).unwrap();
        let v1 = st.second_moment().to_vec();
        st.step(&mut n, &grads).unwrap();
        assert!(st.second_moment().iter().zip(&v1).all(|(b, a)| b >= a && *b >= 0.0));
        assert_eq!(st.step_count(), 2);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let mut n = net();
        let before = n.flat_params();
        let mut grads = vec![0.1; before.len()];
        grads[5] = f64::NAN;
        let mut st = AdamState::for_params(&n, AdamConfig::default());
        let err = st.step(&mut n, &grads).unwrap_err();
        assert!(err.to_string().contains("layer 0 weight (1, 2)"), "{err}");
        assert_eq!(n.flat_params(), before);
        assert_eq!(st.step_count(), 0);
    }
}
