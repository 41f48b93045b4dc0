//! Replay storage and higher-level goal relabeling (off-policy correction).

mod relabel;
mod replay;

pub use relabel::{
    flow_residual, hiro_candidates, hiro_score, recomputed_conditioning, relabel, relabel_flow_full,
    relabel_flow_only,
    relabel_hiro, relabel_none, RelabelOutcome, RelabelStrategy, HIRO_NUM_SAMPLED,
};
pub use replay::{BufferDump, HighTransition, LowTransition, ReplayBuffer, Transition, TransitionDims};
