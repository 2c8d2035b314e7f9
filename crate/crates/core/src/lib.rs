pub mod datasets;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod odeint;
pub mod train;
pub mod velocity;
pub mod cli;

pub use error::{Error, Result};
