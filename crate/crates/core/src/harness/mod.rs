//! Experiment orchestration: configuration, the Monte Carlo runner, and
//! output serialization.

mod config;
mod csv;
mod fixtures;
mod runner;

pub use config::{ExperimentConfig, ResolvedExperiment};
pub use csv::{
    diagnostics_csv, metrics_csv, write_outputs, DIAGNOSTICS_HEADER, METRICS_HEADER,
};
pub use fixtures::{load_complex_fixture, save_complex_fixture, FixtureSidecar};
pub use runner::{
    compute_ber, compute_mse, run_experiment, run_experiment_resolved, DiagRow, ExperimentOutput,
    MetricRow,
};
