//! Minimal differentiable substrate: dense feed-forward nets with analytic
//! backprop, Adam, Polyak averaging and a finite-difference gradient oracle.

mod adam;
mod dense;
mod gradcheck;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use dense::{Activation, DenseNet, GradientBundle, InputAffine, Trace};
pub use gradcheck::{grad_check, numeric_gradient};
pub use params::{polyak_update, Parameters};
