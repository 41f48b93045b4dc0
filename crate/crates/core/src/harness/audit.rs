//! Per-item audit of a relabeling strategy over a dumped buffer.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::HierarchicalAgent;
use super::checkpoint;
use super::config::RunConfig;
use crate::correction::{
    flow_residual, hiro_score, recomputed_conditioning, relabel, BufferDump, HighTransition, RelabelStrategy,
    TransitionDims,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub index: usize,
    pub strategy: RelabelStrategy,
    /// `‖g̃ − g‖`.
    pub goal_drift: f64,
    /// Flow-action residual of the stored goal.
    pub residual_before: f64,
    /// Flow-action residual of the relabeled goal.
    pub residual_after: f64,
    pub hiro_score_stored: f64,
    pub hiro_score_relabeled: f64,
}

fn check_dims(expected: &TransitionDims, found: &TransitionDims) -> Result<()> {
    let pairs = [
        ("state_dim", expected.state_dim, found.state_dim),
        ("action_dim", expected.action_dim, found.action_dim),
        ("goal_dim", expected.goal_dim, found.goal_dim),
        ("cond_dim", expected.cond_dim, found.cond_dim),
        ("horizon", expected.horizon, found.horizon),
    ];
    for (name, e, f) in pairs {
        if e != f {
            return Err(Error::Config(format!(
                "buffer {name} is {f} but the checkpoint expects {e}"
            )));
        }
    }
    Ok(())
}

/// Relabels every item of `dump` with `strategy` and reports residuals,
/// goal drift and HIRO scores. Residuals use the stored conditioning vector,
/// except for `flow_full`, which uses the recomputed one.
pub fn audit_relabel(
    cfg: &RunConfig,
    agent: &HierarchicalAgent,
    dump: &BufferDump,
    strategy: RelabelStrategy,
    seed: u64,
) -> Result<Vec<AuditRow>> {
    check_dims(&TransitionDims::new(agent.lower.dims(), cfg.c), &dump.dims)?;
    let batch: Vec<&HighTransition> = dump.transitions.iter().collect();
    let lp = &agent.lower;
    let bound = &agent.spec.goal_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = relabel(strategy, &batch, lp, bound, &cfg.hiro_std()?, &mut rng)?;
    let mut rows = Vec::with_capacity(batch.len());
    for (index, (item, goal)) in batch.iter().zip(&outcome.goals).enumerate() {
        let cond = if strategy == RelabelStrategy::FlowFull {
            recomputed_conditioning(lp, item)?
        } else {
            item.a_z_state_seq[0].clone()
        };
        let a = &item.a_rnvp_seq[0];
        let stored = item.stored_goal();
        rows.push(AuditRow {
            index,
            strategy,
            goal_drift: goal
                .iter()
                .zip(stored)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt(),
            residual_before: flow_residual(lp, a, stored, &cond)?,
            residual_after: flow_residual(lp, a, goal, &cond)?,
            hiro_score_stored: hiro_score(item, stored, lp)?,
            hiro_score_relabeled: hiro_score(item, goal, lp)?,
        });
    }
    Ok(rows)
}

pub fn write_audit_csv<W: Write>(rows: &[AuditRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Csv {
            path: "<audit>".into(),
            message: e.to_string(),
        })?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: "<audit>".into(),
        source,
    })
}

/// Loads a checkpoint and a buffer dump and audits `strategy` over it.
pub fn run_audit(ckpt: &Path, buffer: &Path, strategy: RelabelStrategy, seed: u64) -> Result<Vec<AuditRow>> {
    let (cfg, agent) = checkpoint::load(ckpt)?;
    let dump = BufferDump::load(buffer)?;
    audit_relabel(&cfg, &agent, &dump, strategy, seed)
}
