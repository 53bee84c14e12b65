//! JSON-configured experiments, bound sweeps and run artifacts.

pub mod bounds;
pub mod config;
pub mod run;

pub use bounds::{bound_samples, bound_sweep, mean_se, write_bounds_csv, BoundRow, BOUNDS_HEADER};
pub use config::{ExperimentConfig, Method, ModelConfig};
pub use run::{config_hash, output_path, read_report, run_experiment, run_sweep, Report, RunSummary};
