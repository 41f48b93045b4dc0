//! TD3 agents, the composite lower-level policy (forward part, conditional
//! part, flow part), the higher-level policy and the HIRO goal conventions.

mod goals;
mod higher;
mod lower;
mod td3;

pub use goals::{goal_transition, intrinsic_reward};
pub use higher::HigherPolicy;
pub use lower::{LowerAction, LowerConfig, LowerDims, LowerPolicy, LowerReport};
pub use td3::{Td3Agent, Td3Config, Td3Report, TransitionBatch, TwinCritic};

use crate::error::Result;

/// A deterministic goal-conditioned action head `(s, g) -> a`.
pub trait GoalConditionedActor {
    fn act_on_goal(&self, state: &[f64], goal: &[f64]) -> Result<Vec<f64>>;
}

impl<F> GoalConditionedActor for F
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    fn act_on_goal(&self, state: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        Ok(self(state, goal))
    }
}

pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

pub(crate) fn hidden_widths(width: usize, layers: usize) -> Vec<usize> {
    vec![width; layers]
}
