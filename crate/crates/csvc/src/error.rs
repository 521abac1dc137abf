//! Error type shared across the codec.

use std::path::PathBuf;

/// Errors produced by the codec library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("malformed {format} data: {detail}")]
    Malformed { format: &'static str, detail: String },

    #[error("invalid parameter {name}: {detail}")]
    InvalidParam { name: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("corrupt intra payload: {0}")]
    CorruptIntra(String),

    #[error("corrupt container: {0}")]
    CorruptContainer(String),

    #[error("container version {0} not supported")]
    Version(u8),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn malformed(format: &'static str, detail: impl ToString) -> Self {
        Error::Malformed {
            format,
            detail: detail.to_string(),
        }
    }

    pub(crate) fn param(name: &'static str, detail: impl ToString) -> Self {
        Error::InvalidParam {
            name,
            detail: detail.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
