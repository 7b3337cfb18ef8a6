//! The `lode` command-line tool.

pub mod args;
pub mod commands;
pub mod error;

pub use args::Cli;
pub use commands::{execute, format_count};
pub use error::{CliError, Failure};
