use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel not evaluable: {0}")]
    NotEvaluable(String),

    #[error("integration aborted at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },

    #[error("stability bound violated at step {step}: {detail}")]
    Stability { step: usize, detail: String },

    #[error("hypothesis {tag} violated: {detail}")]
    Hypothesis { tag: &'static str, detail: String },

    #[error("ill-posed fit: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
