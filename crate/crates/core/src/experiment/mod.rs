//! Experiment descriptions, built-in presets and the sweep runner.

mod config;
mod presets;
mod runner;

pub use config::{ExperimentConfig, Job, Mode, SizingKind, Sweep, SweepParam};
pub use presets::{builtin_experiment, PRESETS};
pub use runner::{
    event_log_name, mean_std, run_experiment, write_results_csv, write_timeline_csv, ExperimentResult, ResultRow,
    RowKind, SimResult, TimelineRow, SCHEMA_VERSION, STEADY_ROUNDS,
};
