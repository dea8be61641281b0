//! Config loading, controller comparison and report writing behind the `agc` binary.

pub mod compare;
pub mod config;
pub mod emit;
pub mod error;
pub mod svg;

pub use compare::{run_comparison, ComparisonReport, TunedController};
pub use config::{load_config, parse_config, RunConfig};
pub use error::CliError;
