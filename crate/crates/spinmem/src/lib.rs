//! Experiment orchestration and the `spinmem` command line: configuration
//! files, parameter scans, figure recipes and CSV output on top of
//! `spinmem-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::Config;
pub use error::{CliError, CliResult};
