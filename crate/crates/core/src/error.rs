//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a precondition (non-finite entries, wrong length).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An argument is out of its valid range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix has an unusable shape for the requested operation.
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Solver configuration is inconsistent with the dataset dimensions.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dataset file could not be read or validated.
    #[error("failed to load `{path}`: {reason}")]
    Load { path: String, reason: String },

    /// The objective became non-finite during optimization.
    #[error("numerical failure at iteration {iteration}: {reason}")]
    Numerical { iteration: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn load(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
