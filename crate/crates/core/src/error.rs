//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record in a line-delimited file failed to parse or validate.
    #[error("{path}:{line}: field `{field}`: {message}")]
    Record {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    /// Dataset-level invariant violation (duplicate ids, missing ids, ...).
    #[error("dataset error: {0}")]
    Dataset(String),

    /// A caller-supplied argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A transient failure talking to a model endpoint; safe to retry.
    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    /// The endpoint answered but cannot provide what was asked of it
    /// (e.g. no per-token log-probabilities). Not retryable.
    #[error("endpoint {endpoint} lacks a required capability: {message}")]
    Capability { endpoint: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn record(
        path: impl Into<String>,
        line: usize,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Record {
            path: path.into(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures worth retrying (network-level trouble).
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}
