//! Experiment runner for the mixture-density training objectives.

pub mod config;
pub mod griddensity;
pub mod heatmap;
pub mod runner;

pub use config::{ExperimentConfig, LossKind};
pub use runner::{run, train, RunArtifacts};
