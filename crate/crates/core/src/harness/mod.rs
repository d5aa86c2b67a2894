//! Reproducible experiment execution, persistence and reporting.

pub mod config;
pub mod experiment;
pub mod report;
pub mod seed;
pub mod sweep;

pub use config::{ExperimentConfig, Metadata};
pub use experiment::{
    read_trace_file, run_experiment, run_experiment_with, run_trials, trace_body, RunOptions, RunResult, SnapshotRow,
    SummaryRow, CONFIG_FILE, SNAPSHOT_FILE, SUMMARY_FILE, THREADS_ENV, TRACE_FILE,
};
pub use report::{report_from_files, ReportKind, Table};
pub use seed::{derive_trial_seed, mix64};
pub use sweep::{sweep, SweepConfig};
