//! Batch front-end for the frequency allocation engine: JSON experiment
//! configs, figure presets, and deterministic CSV / JSON result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod runner;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{CliError, Issue};
pub use runner::{run_experiment, RunOutput, OUT_DIR_ENV};
