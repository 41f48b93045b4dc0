//! Goal relabeling strategies for the higher-level replay.
//!
//! * `flow_only`: invert the flow on the stored `(a_rnvp, a_z_state)` of the
//!   window's first step.
//! * `flow_full`: recompute the conditioning vector from the stored `(s, g)`
//!   through the current forward and conditional parts, then invert.
//! * `hiro`: score ten candidate goals by the log-likelihood of the stored
//!   low-level actions under the current forward part.
//! * `none`: keep the stored goal.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::HighTransition;
use crate::error::{check_len, Error, Result};
use crate::policies::{goal_transition, GoalConditionedActor, LowerPolicy};

/// Gaussian draws around `s_end - s_start` in each HIRO candidate set.
pub const HIRO_NUM_SAMPLED: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelabelStrategy {
    FlowOnly,
    FlowFull,
    Hiro,
    None,
}

impl RelabelStrategy {
    pub const ALL: [RelabelStrategy; 4] = [Self::FlowOnly, Self::FlowFull, Self::Hiro, Self::None];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FlowOnly => "flow_only",
            Self::FlowFull => "flow_full",
            Self::Hiro => "hiro",
            Self::None => "none",
        }
    }
}

impl fmt::Display for RelabelStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelabelStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown relabel strategy {s:?}; expected flow_only | flow_full | hiro | none")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelabelOutcome {
    pub goals: Vec<Vec<f64>>,
    /// Items whose inverse was non-finite and kept their stored goal.
    pub fallbacks: usize,
}

fn invert_or_keep(
    lp: &LowerPolicy,
    item: &HighTransition,
    cond: &[f64],
    fallbacks: &mut usize,
) -> Result<Vec<f64>> {
    match lp.flow.inverse(&item.a_rnvp_seq[0], cond) {
        Ok(g) => Ok(g),
        Err(Error::NonFinite { context }) => {
            log::debug!("flow inverse fell back to stored goal: {context}");
            *fallbacks += 1;
            Ok(item.stored_goal().to_vec())
        }
        Err(e) => Err(e),
    }
}

/// `g̃ = μ_rnvp⁻¹(a_rnvp[0]; a_z_state[0])` with the stored conditioning.
pub fn relabel_flow_only(batch: &[&HighTransition], lp: &LowerPolicy) -> Result<RelabelOutcome> {
    let mut fallbacks = 0;
    let goals = batch
        .iter()
        .map(|item| invert_or_keep(lp, item, &item.a_z_state_seq[0], &mut fallbacks))
        .collect::<Result<_>>()?;
    Ok(RelabelOutcome { goals, fallbacks })
}

/// Conditioning recomputed under current parameters without noise:
/// `a_z' = μ_z(s, g)`, `c' = μ_z-state(s, a_z')`, `g̃ = μ_rnvp⁻¹(a_rnvp[0]; c')`.
pub fn relabel_flow_full(batch: &[&HighTransition], lp: &LowerPolicy) -> Result<RelabelOutcome> {
    let mut fallbacks = 0;
    let goals = batch
        .iter()
        .map(|item| {
            let cond = recomputed_conditioning(lp, item)?;
            invert_or_keep(lp, item, &cond, &mut fallbacks)
        })
        .collect::<Result<_>>()?;
    Ok(RelabelOutcome { goals, fallbacks })
}

/// Conditioning vector recomputed from the stored `(s, g)` under the current
/// parameters, without noise.
pub fn recomputed_conditioning(lp: &LowerPolicy, item: &HighTransition) -> Result<Vec<f64>> {
    let (s, g) = (item.start_state(), item.stored_goal());
    let a_z = lp.forward_action(s, g)?;
    lp.conditioning(s, &a_z, g)
}

/// Candidate set: stored goal, `s_end - s_start` (goal coords, clamped), and
/// eight clamped draws from `N(s_end - s_start, std²)`.
pub fn hiro_candidates<R: Rng + ?Sized>(
    item: &HighTransition,
    goal_bound: &[f64],
    std: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let k = goal_bound.len();
    check_len("hiro candidate std", k, std.len())?;
    check_len("hiro stored goal", k, item.stored_goal().len())?;
    let start = item.start_state();
    let clamp = |v: &mut Vec<f64>| {
        for (x, b) in v.iter_mut().zip(goal_bound) {
            *x = x.clamp(-b, *b);
        }
    };
    let mut diff: Vec<f64> = (0..k).map(|i| item.s_end[i] - start[i]).collect();
    clamp(&mut diff);
    let mut out = Vec::with_capacity(HIRO_NUM_SAMPLED + 2);
    out.push(item.stored_goal().to_vec());
    out.push(diff.clone());
    for _ in 0..HIRO_NUM_SAMPLED {
        let mut c: Vec<f64> = diff
            .iter()
            .zip(std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        clamp(&mut c);
        out.push(c);
    }
    Ok(out)
}

/// `-½ Σ_i ‖a_z[i] - μ_z(s[i], g̃[i])‖²` with `g̃` propagated across the
/// window by the goal transition.
pub fn hiro_score<A: GoalConditionedActor + ?Sized>(
    item: &HighTransition,
    candidate: &[f64],
    actor: &A,
) -> Result<f64> {
    let mut goal = candidate.to_vec();
    let mut score = 0.0;
    for i in 0..item.len() {
        if i > 0 {
            goal = goal_transition(&item.s_seq[i - 1], &goal, &item.s_seq[i])?;
        }
        let predicted = actor.act_on_goal(&item.s_seq[i], &goal)?;
        check_len("hiro score action", item.a_z_seq[i].len(), predicted.len())?;
        let sq: f64 = item.a_z_seq[i]
            .iter()
            .zip(&predicted)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        score -= 0.5 * sq;
    }
    Ok(score)
}

/// Picks the highest-scoring candidate; ties go to the lowest index.
pub fn relabel_hiro<A: GoalConditionedActor + ?Sized, R: Rng + ?Sized>(
    batch: &[&HighTransition],
    actor: &A,
    goal_bound: &[f64],
    std: &[f64],
    rng: &mut R,
) -> Result<RelabelOutcome> {
    let mut goals = Vec::with_capacity(batch.len());
    for item in batch {
        let mut candidates = hiro_candidates(item, goal_bound, std, rng)?;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, c) in candidates.iter().enumerate() {
            let score = hiro_score(item, c, actor)?;
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        goals.push(candidates.swap_remove(best));
    }
    Ok(RelabelOutcome { goals, fallbacks: 0 })
}

pub fn relabel_none(batch: &[&HighTransition]) -> RelabelOutcome {
    RelabelOutcome {
        goals: batch.iter().map(|t| t.stored_goal().to_vec()).collect(),
        fallbacks: 0,
    }
}

/// Dispatches to the configured strategy. `hiro_std` is the per-coordinate
/// std of the HIRO Gaussian draws.
pub fn relabel<R: Rng + ?Sized>(
    strategy: RelabelStrategy,
    batch: &[&HighTransition],
    lp: &LowerPolicy,
    goal_bound: &[f64],
    hiro_std: &[f64],
    rng: &mut R,
) -> Result<RelabelOutcome> {
    match strategy {
        RelabelStrategy::FlowOnly => relabel_flow_only(batch, lp),
        RelabelStrategy::FlowFull => relabel_flow_full(batch, lp),
        RelabelStrategy::Hiro => relabel_hiro(batch, lp, goal_bound, hiro_std, rng),
        RelabelStrategy::None => Ok(relabel_none(batch)),
    }
}

/// `‖a_rnvp - μ_rnvp(goal; cond)‖₂` under the current flow.
pub fn flow_residual(lp: &LowerPolicy, a_rnvp: &[f64], goal: &[f64], cond: &[f64]) -> Result<f64> {
    let a = lp.flow.forward(goal, cond)?;
    Ok(a.iter().zip(a_rnvp).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}
