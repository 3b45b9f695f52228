//! Experiment harness around `sdefilter`: built-in models, config files,
//! synthetic data, filter runs, comparisons and oracle runs, with their CSV
//! and JSON artifacts.

pub mod artifacts;
pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod models;
pub mod oracle_cmd;

pub use compare::{compare_filters, ComparisonRow};
pub use config::{ExperimentConfig, ModelId};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, run_filter_on, simulate_truth, FilterRun, RunReport, Truth};
pub use oracle_cmd::{run_oracle, OracleKind};
