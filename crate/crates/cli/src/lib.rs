//! Experiment harness around `semcom-core`: run configuration, corpus
//! preparation, training, SNR sweeps, the conventional baseline, MI probes,
//! transfer runs and long-format CSV results.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use report::{Metric, MetricsReport, Row};
