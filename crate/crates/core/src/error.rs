use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown {kind} `{name}`")]
    UnknownName {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        name: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{kind} index {index} out of range (len {len})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("secure aggregation aborted, masks of {missing:?} are unresolved")]
    UnresolvedMask { missing: Vec<usize> },

    #[error("insufficient adversary knowledge: {0}")]
    InsufficientKnowledge(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss at round {round}, client {client}, batch {batch}")]
    NonFiniteLoss {
        round: usize,
        client: usize,
        batch: usize,
    },

    #[error("dataset fingerprints differ: {0}")]
    FingerprintMismatch(String),

    #[error("malformed checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Config(_) | Error::Parse { .. } | Error::UnknownName { .. }
        )
    }
}
