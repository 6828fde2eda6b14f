//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model evaluation, fitting, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough data points to perform the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A least-squares fit did not produce a usable result.
    #[error("fit failed{}: {message}", stage.as_ref().map(|s| format!(" at stage {s}")).unwrap_or_default())]
    FitFailure {
        /// Pipeline stage that failed, when the fit is multi-stage.
        stage: Option<String>,
        message: String,
    },

    /// Gaussian conditioning could not factorize the Gram matrix.
    #[error("conditioning failed: {message} (condition estimate {condition_estimate:.3e})")]
    Conditioning {
        message: String,
        condition_estimate: f64,
    },

    /// Hyperparameter optimization failed on every start.
    #[error("optimization failed: {message}")]
    Optimization {
        message: String,
        /// One diagnostic line per start.
        diagnostics: Vec<String>,
    },

    /// Input file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    pub(crate) fn fit(stage: Option<&str>, msg: impl Into<String>) -> Self {
        Error::FitFailure {
            stage: stage.map(str::to_owned),
            message: msg.into(),
        }
    }
}
