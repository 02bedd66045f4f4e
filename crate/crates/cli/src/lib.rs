//! Library side of the `hift` command: configuration, run directories and
//! the subcommand implementations, usable from tests without spawning a
//! process.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
