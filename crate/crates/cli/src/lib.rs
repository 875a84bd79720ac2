//! Experiment harness around the `nested-evidence` library: flat config
//! files, seeded replication sweeps and CSV result logs.

pub mod config;
pub mod error;
pub mod experiments;
pub mod log;
pub mod probit;

pub use config::{preset, ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use experiments::{run_experiment, Outcome};
pub use log::{ResultLog, ResultRow, RowSink, SummaryRow};
