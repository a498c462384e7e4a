//! Command-line companion of `needle-core`: TOML configuration, CSV output
//! and parallel study sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod study;

pub use config::RunConfiguration;
pub use error::CliError;
