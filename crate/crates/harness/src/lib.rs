//! Experiments, configuration and command-line front end for `fvre-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::ExperimentConfig;
pub use error::HarnessError;
pub use experiments::{run, ExperimentKind};
pub use report::{Format, Report};
