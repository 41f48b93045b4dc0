//! Conditional invertible flow: two affine coupling layers with a coordinate
//! reversal between them. The forward map sends a goal to the flow action; the
//! inverse recovers the goal exactly for a fixed conditioning vector.

mod coupling;
mod stack;

pub use coupling::{CouplingLayer, CouplingTrace};
pub use stack::{ConditionalFlow, FlowGradients, FlowTrace};

/// Default magnitude bound on the effective log-scale of each coupling layer.
pub const DEFAULT_SCALE_BOUND: f64 = 2.0;
