use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} out of range for {len} pixels")]
    OutOfRange { index: usize, len: usize },

    #[error("empty input")]
    Empty,

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("solver diverged at iteration {iter}: energy {energy:e} exceeds {limit:e}")]
    Divergence { iter: usize, energy: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short machine-readable kind tag, used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::OutOfRange { .. } => "out-of-range",
            Error::Empty => "empty-input",
            Error::MalformedHeader(_) => "malformed-header",
            Error::TruncatedPayload { .. } => "truncated-payload",
            Error::UnsupportedFormat(_) => "unsupported-format",
            Error::NonFinite(_) => "non-finite",
            Error::Divergence { .. } => "divergence",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
