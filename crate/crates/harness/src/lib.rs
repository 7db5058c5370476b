//! Experiment orchestration for the PUF simulator: TOML configuration,
//! built-in presets, the staged run pipeline with its on-disk artifacts and
//! manifest, and run comparison.

pub mod compare;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod presets;
pub mod store;

pub use compare::{compare_runs, RunComparison};
pub use config::ExperimentConfig;
pub use error::{HarnessError, Result, Stage};
pub use manifest::{RunManifest, RunStatus};
pub use pipeline::{run_experiment, MetricsSummary, RandomnessSummary, RunDir, RunOutcome};
