use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the oracle toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: block {found} follows block {previous}; block numbers must be increasing")]
    Ordering { path: PathBuf, previous: u64, found: u64 },

    #[error("{path}: schema mismatch: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("rpc fetch failed for block {block} after {attempts} attempts: {message}")]
    Fetch { block: u64, attempts: u32, message: String },

    #[error("block {block}: malformed rpc response: {message}")]
    RpcSchema { block: u64, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("insufficient history: need {needed} values, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("factorization failed after jitter {jitter:e}; condition estimate {condition:e}")]
    Factorization { jitter: f64, condition: f64 },

    #[error("hyperparameter fit failed: every start was numerically infeasible")]
    Fit,

    #[error("oracle state: {0}")]
    State(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
