use std::path::PathBuf;

use fedkan_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid run configuration {}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub mod codes {
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    pub const NUMERIC: i32 = 5;
    pub const DATA: i32 = 6;
    pub const INTERNAL: i32 = 1;
}

/// Process exit code for an error: distinct codes for configuration, I/O,
/// numeric and input-data failures.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Config { .. } => codes::CONFIG,
        CliError::Core(e) => match e {
            CoreError::Config(_) => codes::CONFIG,
            CoreError::Io { .. } => codes::IO,
            CoreError::Numeric(_) => codes::NUMERIC,
            CoreError::Ingest { .. } | CoreError::RejectedRows { .. } | CoreError::Format(_) => codes::DATA,
            CoreError::Contract(_) | CoreError::IncompatibleWeights { .. } => codes::INTERNAL,
        },
    }
}
