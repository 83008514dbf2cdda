use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inconsistent shapes, bad hyperparameters, undersized pools and similar.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value left the domain an operation is defined on (e.g. a probability outside (0, 1)).
    #[error("numerical domain error: {0}")]
    Domain(String),

    /// A loss or gradient became non-finite during training.
    #[error("training diverged at step {step}: {reason}\n{snapshot}")]
    Divergence {
        step: usize,
        reason: String,
        snapshot: String,
    },

    /// Calling an operation out of order, such as stepping a finished episode.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
