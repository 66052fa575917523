//! Experiment runner for the damped p-Laplace flow.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, Overrides};
pub use runner::{run_experiment, run_sweep, verify_history, RunOutcome, RunRecord};
