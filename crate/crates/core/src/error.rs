use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two grids do not share a lattice, or a window does not fit its parent.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    /// A file violates the supported format; `tag` names the offending field.
    #[error("format error [{tag}]: {message}")]
    Format { tag: String, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(tag: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            tag: tag.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn alignment(message: impl Into<String>) -> Self {
        Error::Alignment(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
