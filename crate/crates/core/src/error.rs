//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The objective has an infinite one-sided derivative at this point
    /// (unsmoothed amplitude or Poisson loss with a zero inner product
    /// against a positive measurement).
    #[error("nonsmooth point: loss derivative is -inf at measurement index {index}")]
    NonsmoothPoint { index: usize },

    /// A theorem precondition (rank floor, positivity) is violated.
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV or JSON input.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// CLI exit code class: 1 for argument/validation errors, 2 for i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Format(_) => 2,
            _ => 1,
        }
    }
}
