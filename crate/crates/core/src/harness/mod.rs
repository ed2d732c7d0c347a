//! Scenario orchestration: simulated robot, camera, estimator and controller
//! wired together for the touching, clearing and jumping experiments, plus
//! parameter sweeps and report files.

pub mod clear;
pub mod config;
pub mod jump;
pub mod report;
pub mod sweep;
pub mod touch;

pub use config::{delta_envelope, Axis, ScenarioConfig, ScenarioKind};
pub use report::{emit, RunReport};
pub use sweep::{run_trial, sweep, trial_seed, CellParams, TrialRecord};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o failure: {0}")]
    IoFailure(String),
    /// A trial failed; recorded, not fatal to a sweep.
    #[error("{0}")]
    Trial(String),
    /// The cell is outside the scenario's safe envelope.
    #[error("skipped: {0}")]
    Skipped(String),
}

macro_rules! trial_error_from {
    ($($t:ty),*) => {
        $(impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Trial(e.to_string())
            }
        })*
    };
}

trial_error_from!(
    crate::estimators::EstimatorError,
    crate::control::ControlError,
    crate::camera::CameraError,
    crate::plant::PlantError,
    crate::signals::SignalError,
    crate::linalg::LinalgError
);

pub type Result<T> = std::result::Result<T, HarnessError>;
