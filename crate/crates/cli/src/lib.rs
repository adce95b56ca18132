//! Library side of the `fedkan` command: run configuration, the
//! `generate` / `train` / `compare` commands and their output files.

pub mod commands;
pub mod config;
mod error;

pub use commands::{cmd_compare, cmd_generate, cmd_train, percent_reduction, CompareOutcome, Overrides, TrainOutcome};
pub use config::RunConfig;
pub use error::{exit_code, CliError};
