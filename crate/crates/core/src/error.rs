//! Error type shared across the pipeline.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/shape mismatches. Always names both sides.
    #[error("dimension error in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    /// Invalid configuration values (bad eps, kernel < 1, unknown severity, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an API precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values or other numeric breakdown, naming where it happened.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An operation was invoked before the state it needs exists.
    #[error("state error: {0}")]
    State(String),

    /// An id failed to resolve (item, embedding row, parameter name).
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Malformed input files (corpus records, blobs, configs, images).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dimension(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
