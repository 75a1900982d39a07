use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the factorization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// The rank-r SVD fits the data exactly, so a ratio against it is meaningless.
    #[error("exact-rank data: relative error undefined (numerator {numerator:e}, baseline 0)")]
    ExactRank { numerator: f64 },

    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code category used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) => 2,
            Error::Io { .. } => 3,
            Error::Parse { .. } | Error::Json(_) => 4,
            Error::Validation(_) | Error::ExactRank { .. } => 5,
            Error::NonFinite(_) => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
