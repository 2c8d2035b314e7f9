use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("feature {index} has (near) zero variance")]
    DegenerateFeature { index: usize },

    #[error("degenerate support: truth sample has min == max ({value})")]
    DegenerateSupport { value: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("kinematics error: {0}")]
    Kinematics(String),

    #[error("time {t} outside [0, 1]")]
    Domain { t: f64 },

    #[error("network mode mismatch: {0}")]
    Mode(String),

    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    #[error("checkpoint field `{field}`: {reason}")]
    Checkpoint { field: String, reason: String },

    #[error("solver did not converge after {steps} steps (reached t = {t})")]
    NonConvergence {
        steps: usize,
        t: f64,
        partial: Vec<f64>,
    },

    #[error("solver diverged: non-finite velocity at t = {t}")]
    Divergence { t: f64 },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input or usage).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Divergence { .. } | Error::NonFiniteLoss { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
