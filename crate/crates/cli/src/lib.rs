//! Scenario files, the run pipeline and output bundles behind the
//! `slowlight` command.

pub mod config;
pub mod error;
pub mod runner;
pub mod scenarios;

pub use config::Config;
pub use error::CliError;
