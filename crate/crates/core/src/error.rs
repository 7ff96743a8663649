use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments. Detected before any work starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// A document with no tokens left after preprocessing.
    #[error("degenerate document: no tokens after preprocessing")]
    DegenerateDocument,

    /// Array shapes that do not fit together.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Format(String),

    /// AUC needs both positive and negative examples.
    #[error("AUC is undefined: {0}")]
    UndefinedAuc(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors a caller should treat as bad input or configuration
    /// rather than a failure during the computation itself.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Format(_) | Error::Io { .. }
        )
    }
}
