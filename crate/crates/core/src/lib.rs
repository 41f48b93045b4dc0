//! Two-level goal-conditioned hierarchical RL whose lower-level policy embeds a
//! conditional invertible flow. Stored higher-level goals are relabeled by
//! inverting the flow under the current lower-level parameters, with a
//! HIRO-style candidate-scoring relabeler kept as a baseline.

pub mod correction;
pub mod envs;
pub mod error;
pub mod flow;
pub mod harness;
pub mod numeric;
pub mod policies;

pub use error::{Error, Result};
pub use flow::{ConditionalFlow, CouplingLayer};
pub use numeric::{Activation, AdamConfig, AdamState, DenseNet, InputAffine, Parameters};
