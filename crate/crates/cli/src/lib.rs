//! Library half of the `runoff` command: configuration, the posterior store,
//! report tables and charts. `main.rs` only parses flags and maps errors to
//! exit codes.

pub mod chart;
pub mod commands;
pub mod config;
pub mod error;
pub mod store;

pub use config::RunConfig;
pub use error::{CliError, ExitStatus};
