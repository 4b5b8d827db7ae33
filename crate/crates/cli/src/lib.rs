//! Command-line front end: configuration parsing, the experiment stages and
//! their on-disk artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod study;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
