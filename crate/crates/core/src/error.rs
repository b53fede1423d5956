use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, malformed or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An expression graph was built or differentiated in an unsupported way.
    #[error("graph construction error: {0}")]
    Graph(String),

    /// A NaN or infinity showed up where only finite numbers are allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The environment integrator produced a non-finite state.
    #[error("environment fault at step {step}: {reason}")]
    EnvFault { step: usize, reason: String },

    #[error("corrupt checkpoint {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("fixed-point iteration did not converge within {cap} iterations (residual {residual:e})")]
    NoConvergence { cap: usize, residual: f64 },

    #[error("missing checkpoint for seed {seed}: {path}")]
    MissingCheckpoint { seed: u64, path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
