//! Experiment runner for `ceb-core`: sweeps, memorization checks, attack and
//! detection pipelines, and information-plane output.

pub mod config;
pub mod error;
pub mod memorize;
pub mod pipelines;
pub mod plane;
pub mod sweep;

pub use config::{Budget, DatasetConfig, ExperimentConfig, ObjectiveConfig, RunSpec};
pub use error::{LabError, Result};
pub use memorize::{run_memorization, MemorizationConfig, MemorizationReport};
pub use plane::{emit_plane, PlaneRow, Units};
pub use sweep::{load_run, run_sweep, Manifest, RunRecord, RunStatus};
