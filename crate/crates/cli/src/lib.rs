//! Command-line gateway over `skyvault-core`: a persistent state directory,
//! subcommands for each workflow step and an HTTP identity service.

pub mod commands;
pub mod config;
pub mod error;
pub mod server;
pub mod state;

pub use commands::{main_with_args, run, Cli};
pub use error::CliError;
