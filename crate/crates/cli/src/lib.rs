//! Command-line experiment driver for the `heavycov` library.

// `!(x > y)` rejects NaN along with the failed comparison
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod config;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] heavycov::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
