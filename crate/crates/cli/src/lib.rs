//! Command-line front end for `krondpp`: synthetic data, training,
//! sampling, evaluation, benchmarking and partitioning.
//!
//! Exit codes: 0 success, 1 usage, 2 numerical failure, 3 I/O or parse
//! failure.

pub mod commands;
pub mod io;

mod error;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult, EXIT_IO, EXIT_NUMERICAL, EXIT_USAGE};
