//! Dormand–Prince integration of learned velocity fields and the sampling
//! entry points built on it.

mod dopri5;
mod sampling;

pub use dopri5::{dopri5, dopri5_fixed, dopri5_step, Dopri5Step, IntegrationResult, SolverConfig, Stepping};
pub use sampling::{generate, generate_keyed, integrate_field, prior_row, unfold, unfold_keyed, Sampled};
