//! File formats, run configuration and command driver for the `stochafem`
//! binary. The numerical work lives in `stochafem-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod mesh_io;
pub mod output;
pub mod pipeline;

pub use commands::{run, Command, Outcome, RunOptions};
pub use error::{CliError, Result};
