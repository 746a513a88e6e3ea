//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A spec, config, or argument failed structural validation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor/batch shape disagreement.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A fit has too few or degenerate data points.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Optimizer hit a non-finite loss or gradient.
    #[error("non-finite value during {stage} at iteration {iteration}")]
    NonFinite { stage: &'static str, iteration: usize },

    /// Least-squares system was singular even after basis downgrades.
    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    /// A benchmark metric missed its acceptance threshold.
    #[error("threshold missed: {0}")]
    Threshold(String),

    /// A file could not be parsed; `context` names the file and row.
    #[error("parse error: {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Process exit code contract: 1 for validation failures, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::RankDeficient(_) | Error::Threshold(_) => 2,
            _ => 1,
        }
    }
}
