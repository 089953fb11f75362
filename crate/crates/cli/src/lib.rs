//! Command-line front end for the capflash simulator: run configuration,
//! subcommand measurements and versioned report files.

pub mod app;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
