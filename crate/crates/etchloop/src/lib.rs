//! Command-line tools and HTTP service around `etchloop-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod server;
pub mod stroke;

pub use error::CliError;
