use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition or type invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Integration produced NaN or infinity.
    #[error("non-finite state at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    /// Integration ran past its step budget without settling on the goal.
    #[error("rollout did not settle within {steps} steps")]
    NotConverged { steps: usize },

    /// A generated trajectory broke a kinematic or distance bound.
    #[error("limit violation: {0}")]
    LimitViolation(String),

    #[error("estimator failure: {0}")]
    Estimator(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), detail: detail.into() }
    }
}
