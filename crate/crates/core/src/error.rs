use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the summarization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("line {line}: field `{field}`: {msg}")]
    Malformed {
        line: usize,
        field: String,
        msg: String,
    },

    #[error("document `{id}`: {msg}")]
    Document { id: String, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint mismatch: {msg}: {}", names.join(", "))]
    CheckpointMismatch { msg: String, names: Vec<String> },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
