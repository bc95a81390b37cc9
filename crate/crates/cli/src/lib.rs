//! Std companion to `traffic-dfa-core`: file formats, config files, the
//! parallel resumable sweep, the calibration suite and the command-line
//! front end.

pub mod cli;
pub mod config;
mod error;
pub mod formats;
pub mod sweep;
pub mod validate;

pub use error::{CliError, ExitCode};
