//! Inverse pipeline: capacitance frames in, normal strain, shear vector,
//! force estimates and a stimulus class out.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{closure_from_normal_strain, MaterialModel};
use crate::physics::{Axis, CapacitanceFrame, Channel, ParasiticModel, TaxelGeometry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("{0}: denominator is not positive")]
    NonPositiveDenominator(&'static str),
    #[error("expected a mutual-mode frame")]
    NotMutual,
    #[error("channel {channel} is {value_pf} pF after parasitic subtraction")]
    NonPositiveChannel { channel: Channel, value_pf: f64 },
    #[error("all channels inside the dead-band")]
    InconclusiveWithinDeadband,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

/// η/d from the four channel sums. Exact under the ideal model for any
/// simultaneous shear.
pub fn normal_strain(baseline: &[f64; 4], current: &[f64; 4]) -> Result<f64, DecodeError> {
    let den: f64 = current.iter().sum();
    if !(den > 0.0) {
        return Err(DecodeError::NonPositiveDenominator("normal strain"));
    }
    let num: f64 = current.iter().zip(baseline).map(|(c, b)| c - b).sum();
    Ok(num / den)
}

fn shear_along(axis: Axis, baseline: &[f64; 4], current: &[f64; 4], geom: &TaxelGeometry) -> Result<f64, DecodeError> {
    // (lo, hi): the electrode whose overlap shrinks and the one whose overlap
    // grows for positive shear
    let (lo, hi) = axis.pair();
    let den = current[lo] + current[hi];
    if !(den > 0.0) {
        return Err(DecodeError::NonPositiveDenominator(match axis {
            Axis::X => "shear x",
            Axis::Y => "shear y",
        }));
    }
    let num = baseline[lo] * current[hi] - baseline[hi] * current[lo];
    Ok(geom.d_mm / geom.eps_w_pf * num / den)
}

/// λx (mm), positive when the top layer moves toward E3.
pub fn shear_x(baseline: &[f64; 4], current: &[f64; 4], geom: &TaxelGeometry) -> Result<f64, DecodeError> {
    shear_along(Axis::X, baseline, current, geom)
}

/// λy (mm), positive when the top layer moves toward E2.
pub fn shear_y(baseline: &[f64; 4], current: &[f64; 4], geom: &TaxelGeometry) -> Result<f64, DecodeError> {
    shear_along(Axis::Y, baseline, current, geom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearVector {
    pub magnitude_mm: f64,
    /// Degrees in [0, 360); 0 when `zero` is set.
    pub angle_deg: f64,
    /// The vector has zero length and the angle carries no information.
    pub zero: bool,
}

pub fn shear_vector(shear_x_mm: f64, shear_y_mm: f64) -> ShearVector {
    let magnitude_mm = shear_x_mm.hypot(shear_y_mm);
    if magnitude_mm == 0.0 {
        return ShearVector {
            magnitude_mm,
            angle_deg: 0.0,
            zero: true,
        };
    }
    let mut angle_deg = shear_y_mm.atan2(shear_x_mm).to_degrees();
    if angle_deg < 0.0 {
        angle_deg += 360.0;
    }
    if angle_deg >= 360.0 {
        angle_deg -= 360.0;
    }
    ShearVector {
        magnitude_mm,
        angle_deg,
        zero: false,
    }
}

/// Removes the per-channel parasitic offsets from a mutual frame.
pub fn subtract_parasitics(
    frame: &CapacitanceFrame,
    parasitics: &ParasiticModel,
) -> Result<CapacitanceFrame, DecodeError> {
    let c = frame.mutual_values().ok_or(DecodeError::NotMutual)?;
    let mut out = [0.0; 4];
    for (i, ch) in Channel::MUTUAL.iter().enumerate() {
        out[i] = c[i] - parasitics.offsets_pf[i];
        if !(out[i] > 0.0) {
            return Err(DecodeError::NonPositiveChannel {
                channel: *ch,
                value_pf: out[i],
            });
        }
    }
    Ok(CapacitanceFrame::mutual(frame.t_s, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShearDirection {
    PosX,
    NegX,
    PosY,
    NegY,
    None,
}

impl ShearDirection {
    fn tag(self) -> &'static str {
        match self {
            ShearDirection::PosX => "ShearPX",
            ShearDirection::NegX => "ShearNX",
            ShearDirection::PosY => "ShearPY",
            ShearDirection::NegY => "ShearNY",
            ShearDirection::None => "none",
        }
    }

    fn class(self) -> StimulusClass {
        match self {
            ShearDirection::PosX => StimulusClass::ShearPX,
            ShearDirection::NegX => StimulusClass::ShearNX,
            ShearDirection::PosY => StimulusClass::ShearPY,
            ShearDirection::NegY => StimulusClass::ShearNY,
            ShearDirection::None => StimulusClass::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StimulusClass {
    Idle,
    Proximity,
    LightTouch,
    Pressure,
    ShearPX,
    ShearNX,
    ShearPY,
    ShearNY,
    Combined { pressure: bool, shear: ShearDirection },
}

impl fmt::Display for StimulusClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StimulusClass::Idle => f.write_str("Idle"),
            StimulusClass::Proximity => f.write_str("Proximity"),
            StimulusClass::LightTouch => f.write_str("LightTouch"),
            StimulusClass::Pressure => f.write_str("Pressure"),
            StimulusClass::ShearPX => f.write_str("ShearPX"),
            StimulusClass::ShearNX => f.write_str("ShearNX"),
            StimulusClass::ShearPY => f.write_str("ShearPY"),
            StimulusClass::ShearNY => f.write_str("ShearNY"),
            StimulusClass::Combined { pressure, shear } => match (pressure, shear) {
                (true, ShearDirection::None) => f.write_str("Combined(pressure)"),
                (true, s) => write!(f, "Combined(pressure+{})", s.tag()),
                (false, s) => write!(f, "Combined({})", s.tag()),
            },
        }
    }
}

/// Dead-band and bands used by [`classify`]. All values are fractions of the
/// rest capacitance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierThresholds {
    /// |ΔC/C0| below this counts as unchanged.
    pub epsilon_rel: f64,
    /// Mean drop range of a fingertip resting on the surface. Smaller drops
    /// (and drops too large for a fingertip) read as proximity.
    pub proximity_band: (f64, f64),
    /// Relative rise of the self-capacitance plane that signals a finger.
    pub self_cap_rel: f64,
    /// Relative self-capacitance rise treated as contact.
    pub self_contact_rel: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        Self {
            epsilon_rel: 0.005,
            proximity_band: (0.095, 0.19),
            self_cap_rel: 0.05,
            self_contact_rel: 0.3,
        }
    }
}

impl ClassifierThresholds {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let (lo, hi) = self.proximity_band;
        let ok = self.epsilon_rel > 0.0
            && lo > 0.0
            && lo < hi
            && hi < 0.2
            && self.self_cap_rel > 0.0
            && self.self_contact_rel > self.self_cap_rel;
        if ok {
            Ok(())
        } else {
            Err(DecodeError::InvalidThresholds(format!("{self:?}")))
        }
    }
}

/// Self-capacitance reading taken with the top plane switched to the
/// self-capacitance converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfCapSample {
    pub baseline_pf: f64,
    pub current_pf: f64,
}

impl SelfCapSample {
    pub fn relative_rise(&self) -> f64 {
        (self.current_pf - self.baseline_pf) / self.baseline_pf
    }
}

fn sign_with_deadband(rel: f64, eps: f64) -> i8 {
    if rel > eps {
        1
    } else if rel < -eps {
        -1
    } else {
        0
    }
}

/// Maps the sign pattern of the four relative changes onto the truth table.
///
/// Frames should already have parasitics removed. Mixed patterns are split
/// with the strain and shear decoders into a coarse combined label. With a
/// self-capacitance sample, an elevated self channel marks a finger as
/// present even when the mutual channels do not move (ground plane active).
pub fn classify(
    baseline: &[f64; 4],
    current: &[f64; 4],
    geom: &TaxelGeometry,
    thresholds: &ClassifierThresholds,
    self_cap: Option<&SelfCapSample>,
) -> Result<StimulusClass, DecodeError> {
    thresholds.validate()?;
    let eps = thresholds.epsilon_rel;
    let rel: [f64; 4] = std::array::from_fn(|i| (current[i] - baseline[i]) / baseline[i]);
    let signs = rel.map(|r| sign_with_deadband(r, eps));
    let self_rise = self_cap.map(SelfCapSample::relative_rise);
    let finger_present = self_rise.is_some_and(|r| r > thresholds.self_cap_rel);

    let touch_by_drop = |drop: f64| {
        let (lo, hi) = thresholds.proximity_band;
        if (lo..=hi).contains(&drop) {
            StimulusClass::LightTouch
        } else {
            StimulusClass::Proximity
        }
    };

    match signs {
        [0, 0, 0, 0] => {
            if finger_present {
                if self_rise.is_some_and(|r| r >= thresholds.self_contact_rel) {
                    Ok(StimulusClass::LightTouch)
                } else {
                    Ok(StimulusClass::Proximity)
                }
            } else {
                Err(DecodeError::InconclusiveWithinDeadband)
            }
        }
        [-1, -1, -1, -1] => Ok(touch_by_drop(-rel.iter().sum::<f64>() / 4.0)),
        [1, 1, 1, 1] => Ok(StimulusClass::Pressure),
        [-1, 0, 1, 0] => Ok(StimulusClass::ShearPX),
        [1, 0, -1, 0] => Ok(StimulusClass::ShearNX),
        [0, 1, 0, -1] => Ok(StimulusClass::ShearPY),
        [0, -1, 0, 1] => Ok(StimulusClass::ShearNY),
        _ => {
            let strain = normal_strain(baseline, current)?;
            let lx = shear_x(baseline, current, geom)?;
            let ly = shear_y(baseline, current, geom)?;
            // a shear λ changes each electrode of its pair by λ/L
            let (sx, sy) = (lx / geom.l_mm, ly / geom.l_mm);
            let shear = if sx.abs().max(sy.abs()) <= eps {
                ShearDirection::None
            } else if sx.abs() >= sy.abs() {
                if sx > 0.0 {
                    ShearDirection::PosX
                } else {
                    ShearDirection::NegX
                }
            } else if sy > 0.0 {
                ShearDirection::PosY
            } else {
                ShearDirection::NegY
            };
            // only call it combined when both components clear the dead-band
            Ok(match shear {
                ShearDirection::None if strain < 0.0 => touch_by_drop(-strain),
                ShearDirection::None => StimulusClass::Pressure,
                s if strain.abs() <= eps => s.class(),
                s => StimulusClass::Combined {
                    pressure: strain > eps,
                    shear: s,
                },
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedState {
    /// η/d.
    pub normal_strain: f64,
    pub shear_x_mm: f64,
    pub shear_y_mm: f64,
    /// λx/d and λy/d.
    pub shear_strain_x: f64,
    pub shear_strain_y: f64,
    pub shear_magnitude_mm: f64,
    pub shear_angle_deg: f64,
    pub shear_zero: bool,
    pub pressure_kpa: f64,
    pub shear_force_n: f64,
    pub stimulus: StimulusClass,
}

/// Decoder bound to one calibrated taxel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub geometry: TaxelGeometry,
    pub material: MaterialModel,
    pub parasitics: ParasiticModel,
    pub thresholds: ClassifierThresholds,
}

impl Decoder {
    pub fn new(geometry: TaxelGeometry, material: MaterialModel, parasitics: ParasiticModel) -> Self {
        Self {
            geometry,
            material,
            parasitics,
            thresholds: ClassifierThresholds::default(),
        }
    }

    /// Pressure implied by a normal strain; 0 for expansion.
    pub fn pressure_from_normal_strain(&self, strain: f64) -> f64 {
        if strain <= 0.0 || strain >= 1.0 {
            return if strain >= 1.0 {
                self.material.normal.max_pressure_kpa()
            } else {
                0.0
            };
        }
        self.material
            .normal
            .pressure_saturating(closure_from_normal_strain(strain))
    }

    /// Decodes raw frames (parasitics included). `baseline` is a rest frame.
    pub fn decode(
        &self,
        baseline: &CapacitanceFrame,
        current: &CapacitanceFrame,
        self_cap: Option<&SelfCapSample>,
    ) -> Result<DecodedState, DecodeError> {
        let b = subtract_parasitics(baseline, &self.parasitics)?;
        let c = subtract_parasitics(current, &self.parasitics)?;
        self.decode_values(b.mutual_values().unwrap(), c.mutual_values().unwrap(), self_cap)
    }

    /// Decodes parasitic-free channel values.
    pub fn decode_values(
        &self,
        baseline: &[f64; 4],
        current: &[f64; 4],
        self_cap: Option<&SelfCapSample>,
    ) -> Result<DecodedState, DecodeError> {
        let strain = normal_strain(baseline, current)?;
        let lx = shear_x(baseline, current, &self.geometry)?;
        let ly = shear_y(baseline, current, &self.geometry)?;
        let v = shear_vector(lx, ly);
        let stimulus = match classify(baseline, current, &self.geometry, &self.thresholds, self_cap) {
            Ok(c) => c,
            Err(DecodeError::InconclusiveWithinDeadband) => StimulusClass::Idle,
            Err(e) => return Err(e),
        };
        Ok(DecodedState {
            normal_strain: strain,
            shear_x_mm: lx,
            shear_y_mm: ly,
            shear_strain_x: lx / self.geometry.d_mm,
            shear_strain_y: ly / self.geometry.d_mm,
            shear_magnitude_mm: v.magnitude_mm,
            shear_angle_deg: v.angle_deg,
            shear_zero: v.zero,
            pressure_kpa: self.pressure_from_normal_strain(strain),
            shear_force_n: v.magnitude_mm / self.material.shear.compliance_mm_per_n,
            stimulus,
        })
    }
}
