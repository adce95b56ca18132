use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameters, widths, grids or run settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a shape or ordering precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("incompatible weights: expected {expected}, found {found}")]
    IncompatibleWeights { expected: String, found: String },

    #[error("ingestion error in {source_name} at line {line}: {message}")]
    Ingest {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("rejected rows in {source_name} (category shares do not sum to 1): lines {lines:?}")]
    RejectedRows { source_name: String, lines: Vec<usize> },

    #[error("malformed document: {0}")]
    Format(String),

    /// NaN or infinite values surfaced during training or evaluation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("I/O error on {}: {source}", path.display())]
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
}
