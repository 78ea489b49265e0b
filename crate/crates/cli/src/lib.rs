//! Configuration files, runs, sweeps and reports for the `metric-sir` command.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, parse_config_str, ModelSource, ModelSpec, SimulationConfig};
pub use error::CliError;
pub use run::{analyze, execute, run, sweep, AnalysisReport, RunOutcome, RunSummary, SweepOutcome};
