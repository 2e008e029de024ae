//! Config-driven driver for progressive region-constrained edits: config
//! parsing and validation, chain execution with artifact output, and
//! inspection renders of checkpoints and masks.

pub mod commands;
pub mod config;
pub mod demo;
pub mod error;

pub use error::CliError;
