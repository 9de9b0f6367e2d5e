//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-finite value appeared where finite numbers are required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The streaming evaluation protocol was violated (e.g. base samples
    /// labeled with an unseen class).
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// A dataset bundle or checkpoint failed validation.
    #[error("format error in `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("file not found: {0}")]
    NotFound(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: String, got: String) -> Self {
        Error::Shape {
            context,
            expected,
            got,
        }
    }

    pub(crate) fn format(field: &str, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
