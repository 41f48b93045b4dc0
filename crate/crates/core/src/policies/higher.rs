use rand::Rng;

use super::goals::goal_transition;
use super::td3::{Td3Agent, Td3Config, Td3Report, TransitionBatch};
use crate::error::{Error, Result};

/// Higher-level policy: emits a fresh goal every `horizon` steps and lets the
/// goal evolve by the goal transition in between.
#[derive(Debug, Clone)]
pub struct HigherPolicy {
    pub agent: Td3Agent,
    horizon: usize,
}

impl HigherPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        goal_bound: Vec<f64>,
        width: usize,
        hidden_layers: usize,
        horizon: usize,
        config: Td3Config,
        rng: &mut R,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon c must be positive".into()));
        }
        let agent = Td3Agent::new(state_dim, goal_bound, width, hidden_layers, config, rng)?;
        Ok(Self { agent, horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn goal_bound(&self) -> &[f64] {
        &self.agent.action_bound
    }

    pub fn emits_at(&self, t: usize) -> bool {
        t % self.horizon == 0
    }

    /// Goal for step `t`. `prev` holds `(s_{t-1}, g_{t-1})` and is required
    /// whenever `t` is not an emission step.
    pub fn act<R: Rng + ?Sized>(
        &self,
        s: &[f64],
        t: usize,
        prev: Option<(&[f64], &[f64])>,
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if self.emits_at(t) {
            if explore {
                self.agent.act_explore(s, rng)
            } else {
                self.agent.act(s)
            }
        } else {
            let (s_prev, g_prev) = prev.ok_or_else(|| {
                Error::Config(format!("step {t} is not an emission step; previous state and goal required"))
            })?;
            goal_transition(s_prev, g_prev, s)
        }
    }

    /// TD3 update with the (possibly relabeled) goals as actions.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &TransitionBatch, rng: &mut R) -> Result<Td3Report> {
        self.agent.update(batch, rng)
    }
}
