//! Experiment harness: configuration, multi-seed runners, result tables, plots
//! and output manifests.

pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod plot;

pub use config::{DataSource, ExperimentConfig};
pub use error::{CliError, Result};
pub use experiment::{AuxTreatment, ResultsTable, RunRow, RunSpec, Runner};
