//! File formats, benchmarks and the command-line front end for `simdreg-core`.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod heatmap;
pub mod train;

pub use checkpoint::Checkpoint;
pub use error::{CliError, Result};
