//! Experiment orchestration: configs, presets, replicate runs and
//! plot-ready tables.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod plotdata;
pub mod presets;
pub mod runner;

pub use config::{ExperimentConfig, FdType};
pub use error::{CliError, Result};
