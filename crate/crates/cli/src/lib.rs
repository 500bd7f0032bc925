//! Command-line front end: sample file formats, experiment configuration,
//! and the runs behind each subcommand.

pub mod config;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod samples;

pub use error::{CliError, Result};
