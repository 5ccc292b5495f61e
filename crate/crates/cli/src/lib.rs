//! Command-line front end: config loading, file formats, run manifests and
//! the subcommand implementations behind the `acam` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod manifest;

pub use error::CliError;
