//! Forward model of the taxel: deformation, proximity, parasitics, crosstalk
//! and noise in, four mutual capacitances out.

mod frame;
mod geometry;
mod noise;
mod proximity;

pub use frame::{CapacitanceFrame, Channel, FrameMode, Readings, UnknownChannel};
pub use geometry::{ideal_capacitances, Axis, DeformationState, TaxelGeometry};
pub use noise::{NoiseModel, NoiseStream};
pub use proximity::{
    decay_profile, proximity_factor, self_capacitance, ProximityParams, ProximityStimulus, SelfCapParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::MaterialModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("normal displacement {eta_mm} mm must lie in [0, d = {d_mm}) mm")]
    GapClosed { eta_mm: f64, d_mm: f64 },
    #[error("shear {lambda_mm} mm along {axis:?} exceeds the overlap length L = {l_mm} mm")]
    OverlapLost { axis: Axis, lambda_mm: f64, l_mm: f64 },
    #[error("proximity distance must be >= 0 mm, got {0}")]
    NegativeDistance(f64),
    #[error("load outside the calibrated envelope: {0}")]
    OutOfEnvelope(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Baselines of the unshielded prototype (pF).
pub const UNSHIELDED_BASELINES_PF: [f64; 4] = [44.0, 49.0, 49.0, 38.0];
/// Baselines after adding the interconnect ground shield (pF).
pub const SHIELDED_BASELINES_PF: [f64; 4] = [14.0, 13.0, 14.0, 15.0];

/// Constant stray capacitance added to each channel by the interconnect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParasiticModel {
    pub offsets_pf: [f64; 4],
    pub shielded: bool,
}

impl Default for ParasiticModel {
    fn default() -> Self {
        Self::none()
    }
}

impl ParasiticModel {
    pub const fn none() -> Self {
        Self {
            offsets_pf: [0.0; 4],
            shielded: false,
        }
    }

    /// Offsets that bring an ideal rest value `c0_pf` up to the measured baselines.
    pub fn from_baselines(baselines_pf: [f64; 4], c0_pf: f64, shielded: bool) -> Result<Self, PhysicsError> {
        let model = Self {
            offsets_pf: baselines_pf.map(|b| b - c0_pf),
            shielded,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn unshielded(c0_pf: f64) -> Result<Self, PhysicsError> {
        Self::from_baselines(UNSHIELDED_BASELINES_PF, c0_pf, false)
    }

    pub fn shielded(c0_pf: f64) -> Result<Self, PhysicsError> {
        Self::from_baselines(SHIELDED_BASELINES_PF, c0_pf, true)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.offsets_pf.iter().all(|o| o.is_finite() && *o >= 0.0) {
            Ok(())
        } else {
            Err(PhysicsError::InvalidParameter(format!(
                "parasitic offsets must be >= 0, got {:?}",
                self.offsets_pf
            )))
        }
    }
}

/// Linear leak of each axis' differential signal into the other pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkModel {
    pub xy_coupling: f64,
}

impl CrosstalkModel {
    /// The ~10% x-to-y cross-over observed on the shielded prototype.
    pub const fn shielded_prototype() -> Self {
        Self { xy_coupling: 0.10 }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if (0.0..1.0).contains(&self.xy_coupling) {
            Ok(())
        } else {
            Err(PhysicsError::InvalidParameter(format!(
                "crosstalk coupling must lie in [0, 1), got {}",
                self.xy_coupling
            )))
        }
    }

    /// Additive crosstalk term per channel, computed from ideal values.
    pub fn terms(&self, ideal: &[f64; 4]) -> [f64; 4] {
        if self.xy_coupling == 0.0 {
            return [0.0; 4];
        }
        let half_k = 0.5 * self.xy_coupling;
        let dx = ideal[2] - ideal[0];
        let dy = ideal[1] - ideal[3];
        [-half_k * dy, half_k * dx, half_k * dy, -half_k * dx]
    }
}

/// Forces applied to the taxel surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedForces {
    pub normal_n: f64,
    pub shear_x_n: f64,
    pub shear_y_n: f64,
    pub contact_area_mm2: f64,
}

impl AppliedForces {
    /// Area of the 14 x 14 mm indenter used for characterization.
    pub const INDENTER_AREA_MM2: f64 = 196.0;

    pub fn new(normal_n: f64, shear_x_n: f64, shear_y_n: f64) -> Self {
        Self {
            normal_n,
            shear_x_n,
            shear_y_n,
            contact_area_mm2: Self::INDENTER_AREA_MM2,
        }
    }

    /// Normal pressure (kPa).
    pub fn pressure_kpa(&self) -> f64 {
        self.normal_n / self.contact_area_mm2 * 1000.0
    }
}

/// What the top layer is subjected to: a known displacement, or forces mapped
/// through the material model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Load {
    Displacement(DeformationState),
    Forces(AppliedForces),
}

impl From<DeformationState> for Load {
    fn from(def: DeformationState) -> Self {
        Load::Displacement(def)
    }
}

impl From<AppliedForces> for Load {
    fn from(f: AppliedForces) -> Self {
        Load::Forces(f)
    }
}

/// Quasi-static displacement produced by the given forces.
pub fn displacement_from_forces(
    material: &MaterialModel,
    geom: &TaxelGeometry,
    forces: &AppliedForces,
) -> Result<DeformationState, PhysicsError> {
    if !(forces.contact_area_mm2.is_finite() && forces.contact_area_mm2 > 0.0) {
        return Err(PhysicsError::InvalidParameter(format!(
            "contact area must be positive, got {}",
            forces.contact_area_mm2
        )));
    }
    if !(forces.normal_n.is_finite() && forces.normal_n >= 0.0) {
        return Err(PhysicsError::OutOfEnvelope(format!(
            "normal force {} N (tension is not modeled)",
            forces.normal_n
        )));
    }
    let envelope = |e: crate::calibration::CalibrationError| PhysicsError::OutOfEnvelope(e.to_string());
    let closure = material
        .normal
        .strain_from_pressure(forces.pressure_kpa())
        .map_err(envelope)?;
    let def = DeformationState {
        eta_mm: geom.d_mm * crate::calibration::normal_strain_from_closure(closure),
        lambda_x_mm: material
            .shear
            .displacement_from_force(forces.shear_x_n)
            .map_err(envelope)?,
        lambda_y_mm: material
            .shear
            .displacement_from_force(forces.shear_y_n)
            .map_err(envelope)?,
    };
    def.validate(geom)?;
    Ok(def)
}

/// Everything about the device that does not change with the stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxelModel {
    pub geometry: TaxelGeometry,
    pub material: MaterialModel,
    pub parasitics: ParasiticModel,
    pub crosstalk: CrosstalkModel,
    pub proximity: ProximityParams,
    pub self_cap: SelfCapParams,
}

impl Default for TaxelModel {
    fn default() -> Self {
        Self::ideal(TaxelGeometry::default())
    }
}

impl TaxelModel {
    /// Parasitic- and crosstalk-free model with the calibrated material.
    pub fn ideal(geometry: TaxelGeometry) -> Self {
        Self {
            geometry,
            material: MaterialModel::calibrated_for(&geometry),
            parasitics: ParasiticModel::none(),
            crosstalk: CrosstalkModel::default(),
            proximity: ProximityParams::average(),
            self_cap: SelfCapParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        self.geometry.validate()?;
        self.parasitics.validate()?;
        self.crosstalk.validate()?;
        self.proximity.validate()?;
        self.self_cap.validate()?;
        self.material
            .validate()
            .map_err(|e| PhysicsError::InvalidParameter(e.to_string()))
    }

    pub fn resolve(&self, load: &Load) -> Result<DeformationState, PhysicsError> {
        match load {
            Load::Displacement(def) => {
                def.validate(&self.geometry)?;
                Ok(*def)
            }
            Load::Forces(f) => displacement_from_forces(&self.material, &self.geometry, f),
        }
    }

    /// Noise-free mutual capacitances.
    ///
    /// `proximity_coupling` scales how much of the proximity drop reaches the
    /// mutual channels: 1 with no top ground plane, the shield leakage
    /// otherwise.
    pub fn mutual_capacitances(
        &self,
        def: &DeformationState,
        prox: Option<&ProximityStimulus>,
        proximity_coupling: f64,
    ) -> Result<[f64; 4], PhysicsError> {
        let ideal = ideal_capacitances(&self.geometry, def)?;
        let factor = match prox {
            Some(p) => 1.0 + proximity_coupling * (proximity_factor(p, &self.proximity)? - 1.0),
            None => 1.0,
        };
        let cross = self.crosstalk.terms(&ideal);
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = factor * ideal[i] + self.parasitics.offsets_pf[i] + cross[i];
        }
        Ok(out)
    }

    /// A single noisy mutual channel, one noise draw.
    pub fn measure_channel(
        &self,
        channel: Channel,
        def: &DeformationState,
        prox: Option<&ProximityStimulus>,
        proximity_coupling: f64,
        noise: &mut NoiseStream,
    ) -> Result<f64, PhysicsError> {
        let value = match channel.mutual_index() {
            Some(i) => self.mutual_capacitances(def, prox, proximity_coupling)?[i],
            None => self_capacitance(prox, &self.self_cap)?,
        };
        Ok(value + noise.sample())
    }

    /// Full mutual-mode frame at time `t_s`: proximity factor times the ideal
    /// value, plus parasitic offset, crosstalk and noise.
    pub fn measure(
        &self,
        load: &Load,
        prox: Option<&ProximityStimulus>,
        noise: &mut NoiseStream,
        t_s: f64,
    ) -> Result<CapacitanceFrame, PhysicsError> {
        let def = self.resolve(load)?;
        let mut c = self.mutual_capacitances(&def, prox, 1.0)?;
        for v in &mut c {
            *v += noise.sample();
        }
        Ok(CapacitanceFrame::mutual(t_s, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn unshielded_rest_reproduces_baselines() {
        let mut model = TaxelModel::default();
        model.parasitics = ParasiticModel::unshielded(model.geometry.c0_pf()).unwrap();
        let frame = model
            .measure(&DeformationState::REST.into(), None, &mut NoiseStream::silent(), 0.0)
            .unwrap();
        assert_eq!(frame.mutual_values().unwrap(), &UNSHIELDED_BASELINES_PF);
    }

    #[test]
    fn shielded_rest_reproduces_baselines() {
        let mut model = TaxelModel::default();
        model.parasitics = ParasiticModel::shielded(model.geometry.c0_pf()).unwrap();
        let frame = model
            .measure(&DeformationState::REST.into(), None, &mut NoiseStream::silent(), 0.0)
            .unwrap();
        assert_eq!(frame.mutual_values().unwrap(), &SHIELDED_BASELINES_PF);
        assert!(model.parasitics.shielded);
    }

    #[test]
    fn offsets_cannot_exceed_baselines() {
        assert!(ParasiticModel::shielded(20.0).is_err());
    }

    #[test]
    fn clean_measure_equals_ideal() {
        let model = TaxelModel::default();
        let def = DeformationState::new(0.3, 0.15, 0.0);
        let frame = model
            .measure(&def.into(), None, &mut NoiseStream::silent(), 1.0)
            .unwrap();
        let ideal = ideal_capacitances(&model.geometry, &def).unwrap();
        assert_eq!(frame.mutual_values().unwrap(), &ideal);
        assert_eq!(frame.t_s, 1.0);
    }

    #[test]
    fn measure_is_deterministic_for_a_seed() {
        let model = TaxelModel::default();
        let noise = NoiseModel::new(0.01, 1234);
        let def = DeformationState::new(0.1, 0.05, -0.02);
        let run = || {
            let mut s = noise.stream().unwrap();
            (0..50)
                .map(|k| model.measure(&def.into(), None, &mut s, k as f64).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.mutual_values().unwrap(), y.mutual_values().unwrap());
            for i in 0..4 {
                assert_eq!(x[i].to_bits(), y[i].to_bits());
            }
        }
    }

    #[test]
    fn grounded_proximity_scales_all_channels_equally() {
        let model = TaxelModel::default();
        let clean = model.mutual_capacitances(&DeformationState::REST, None, 1.0).unwrap();
        let near = model
            .mutual_capacitances(&DeformationState::REST, Some(&ProximityStimulus::finger(0.0)), 1.0)
            .unwrap();
        for i in 0..4 {
            assert!(near[i] < clean[i]);
            assert!(close(near[i] / clean[i], 0.853, 1e-12));
        }
        // A perfect ground plane removes the effect entirely.
        let shielded = model
            .mutual_capacitances(&DeformationState::REST, Some(&ProximityStimulus::finger(0.0)), 0.0)
            .unwrap();
        assert_eq!(shielded, clean);
    }

    #[test]
    fn crosstalk_leaks_x_differential_into_y_pair() {
        let model = TaxelModel {
            crosstalk: CrosstalkModel::shielded_prototype(),
            ..TaxelModel::default()
        };
        let def = DeformationState::new(0.0, 0.2, 0.0);
        let c = model.mutual_capacitances(&def, None, 1.0).unwrap();
        let ideal = ideal_capacitances(&model.geometry, &def).unwrap();
        let dx = ideal[2] - ideal[0];
        assert!(close(c[1] - c[3], 0.10 * dx, 1e-12));
        // sums are untouched
        assert!(close(c.iter().sum::<f64>(), ideal.iter().sum::<f64>(), 1e-12));
    }

    #[test]
    fn zero_forces_give_rest_state() {
        let model = TaxelModel::default();
        let def =
            displacement_from_forces(&model.material, &model.geometry, &AppliedForces::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(def, DeformationState::REST);
    }

    #[test]
    fn minimum_detectable_shear_maps_to_thirteen_percent() {
        let model = TaxelModel::default();
        let def =
            displacement_from_forces(&model.material, &model.geometry, &AppliedForces::new(0.0, 0.2, 0.0)).unwrap();
        let strain = def.lambda_x_mm / model.geometry.d_mm;
        // secant-linear map through two pins; residual at this pin is under 2%
        assert!((strain / 0.13 - 1.0).abs() < 0.02, "strain {strain}");
        assert_eq!(def.lambda_y_mm, 0.0);
    }

    #[test]
    fn eighty_kpa_lands_on_the_stiff_branch() {
        let model = TaxelModel::default();
        let area = AppliedForces::INDENTER_AREA_MM2;
        let forces = AppliedForces::new(80.0 * area / 1000.0, 0.0, 0.0);
        assert!(close(forces.pressure_kpa(), 80.0, 1e-12));
        let def = displacement_from_forces(&model.material, &model.geometry, &forces).unwrap();
        let law = &model.material.normal;
        let closure = def.eta_mm / (model.geometry.d_mm - def.eta_mm);
        assert!(closure > law.strain_break);
        // stiff branch evaluated by hand
        let expected = law.strain_break + (80.0 - law.e1_kpa * law.strain_break) / law.e2_kpa;
        assert!(close(closure, expected, 1e-12));
    }

    #[test]
    fn forces_outside_envelope_error() {
        let model = TaxelModel::default();
        let too_much_shear = AppliedForces::new(0.0, 1.5, 0.0);
        assert!(matches!(
            displacement_from_forces(&model.material, &model.geometry, &too_much_shear),
            Err(PhysicsError::OutOfEnvelope(_))
        ));
        let crushing = AppliedForces::new(100.0, 0.0, 0.0);
        assert!(displacement_from_forces(&model.material, &model.geometry, &crushing).is_err());
    }

    #[test]
    fn self_cap_contact_rise_beats_noise_floor() {
        let p = SelfCapParams::default();
        let sigma = crate::harness::DEFAULT_NOISE_SIGMA_PF;
        let contact = self_capacitance(Some(&ProximityStimulus::finger(0.0)), &p).unwrap();
        assert!(contact - p.baseline_pf > 5.0 * sigma);
    }
}
