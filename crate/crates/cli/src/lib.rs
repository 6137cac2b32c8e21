//! Config-driven experiment runner for the quantum reservoir simulator.

pub mod catalog;
pub mod config;
pub mod error;
pub mod run;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use run::{run_experiment, RunSummary};
