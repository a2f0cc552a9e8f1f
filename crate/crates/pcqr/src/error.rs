use std::path::PathBuf;

/// Errors from file formats and command plumbing.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem failure.
    #[error("{path}: {source}")]
    Io {
        /// File involved.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// Malformed file content.
    #[error("{path}: {message}")]
    Format {
        /// File involved.
        path: PathBuf,
        /// What was wrong.
        message: String,
    },
    /// Bad configuration key or value.
    #[error("config: {0}")]
    Config(String),
    /// Error from the core library.
    #[error(transparent)]
    Core(#[from] pcqr_core::Error),
}

/// Result alias for this crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
