//! Config-driven experiments over the coexistence model and simulator.

// `!(x >= 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod scenario;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use output::{Cell, Format, Table};
pub use scenario::{allocate, run_scenario, RunOptions};
