//! Pipeline orchestration for the `wafer` command-line tool.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use commands::{run, Command, MetricsFile};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
