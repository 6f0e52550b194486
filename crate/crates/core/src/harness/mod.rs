//! Scenario timelines, end-to-end runs, demonstrations and export.

mod demos;
mod export;
mod run;
mod scenario;

pub use demos::{
    ambiguity_demo, ambiguity_scenarios, gripper_demo, AmbiguityReport, AmbiguityRun, GripperParams, GRAVITY_M_S2,
    HOVER_MM,
};
pub use export::{export, from_json, import_json, to_csv, to_json, ExportFormat, CSV_HEADER};
pub use run::{
    resolve_config, run, run_many, run_streaming, RunOptions, RunReport, RunSummary, StepRecord, BASELINE_CYCLES,
    DEFAULT_STEP_DT_S,
};
pub use scenario::{
    builtin, builtin_names, Interpolation, Keyframe, NamedParasitics, NamedProximity, NormalInput, Preset,
    ProximityInput, ReadoutConfig, ResolvedConfig, Scenario, ScenarioConfig, ShearInput, Stimulus,
};

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::decoder::DecodeError;
use crate::physics::PhysicsError;
use crate::readout::ReadoutError;

/// Capacitance noise used when a scenario does not set one (pF).
pub const DEFAULT_NOISE_SIGMA_PF: f64 = 0.002;
pub const DEFAULT_SEED: u64 = 0x7a5e1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("schema error at {pointer:?}: {msg}")]
    Schema { pointer: String, msg: String },
    #[error("keyframe {keyframe} (t = {t} s): {msg}")]
    Precondition { keyframe: usize, t: f64, msg: String },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Bad input (as opposed to a failure while running valid input).
    pub fn is_validation(&self) -> bool {
        match self {
            HarnessError::Schema { .. }
            | HarnessError::Precondition { .. }
            | HarnessError::UnknownScenario(_)
            | HarnessError::Invalid(_)
            | HarnessError::Json(_) => true,
            HarnessError::Calibration(e) => !matches!(e, CalibrationError::Io(_)),
            HarnessError::Physics(PhysicsError::InvalidParameter(_)) => true,
            HarnessError::Decode(DecodeError::InvalidThresholds(_)) => true,
            HarnessError::Readout(ReadoutError::InvalidConfig(_) | ReadoutError::InvalidSchedule(_)) => true,
            _ => false,
        }
    }
}
