//! Experiment harness for the `nmprox` solver: TOML experiment configs,
//! parallel sweeps with CSV traces and JSON summaries, policy comparisons
//! and the property check suite.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ConfigError, ExperimentConfig, X0Policy};
pub use experiment::{compare, run_experiment, ExperimentError};
