//! Material, proximity and sensitivity calibration, plus the parameter file
//! format used to persist a calibrated model.

mod data;
mod fit;
mod material;
mod params_file;
mod proximity_fit;
mod sensitivity;

pub use data::{read_proximity_csv, read_stress_strain_csv};
pub use fit::{
    fit_material, fit_shear_compliance, Branch, MaterialFit, ShearFit, StressStrainRecord, StressStrainSample,
    BREAK_GRID_STEP, MAX_RECORD_STRAIN, SHEAR_PINS,
};
pub use material::{
    closure_from_normal_strain, normal_strain_from_closure, BilinearLaw, MaterialModel, ShearLaw, ViscoelasticState,
};
pub use params_file::{parse_params, read_params, render_params, write_params};
pub use proximity_fit::{fit_proximity, ProximityFit};
pub use sensitivity::{
    calibrate_material, calibrate_normal_law, parasitic_dilution, sensitivity_curve, SensitivityPreset, SensitivityRow,
    SensitivityTable, SensitivityTargets, SENSITIVITY_SWEEP_MAX_KPA, SENSITIVITY_SWEEP_STEP_KPA,
};

use thiserror::Error;

use crate::physics::PhysicsError;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{quantity} {value} outside the calibrated envelope (limit {limit})")]
    OutOfEnvelope {
        quantity: &'static str,
        value: f64,
        limit: f64,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("inconsistent targets: {0}")]
    InconsistentTargets(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
