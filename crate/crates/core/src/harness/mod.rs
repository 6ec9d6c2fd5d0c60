//! Config-driven experiment runner: single runs, the environment grid and
//! the defense sweep, with CSV outputs for external plotting.

pub mod config;
pub mod grid;
pub mod metrics;
pub mod model_io;
pub mod run;

pub use config::{ExperimentConfig, PolicyConfig, PolicyKind};
pub use grid::{run_defense_sweep, run_grid, GridOptions, GridOutcome};
pub use metrics::MetricsRecord;
pub use run::{execute, run_experiment, RunResult};
