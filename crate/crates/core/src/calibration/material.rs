use serde::{Deserialize, Serialize};

use super::CalibrationError;

/// Gap-closure ratio `η / (d − η)` from engineering strain `η / d`.
///
/// This is the strain variable of [`BilinearLaw`]. Under the parallel-plate
/// model it equals the relative change of the summed capacitance.
pub fn closure_from_normal_strain(strain: f64) -> f64 {
    strain / (1.0 - strain)
}

/// Engineering strain `η / d` from the gap-closure ratio.
pub fn normal_strain_from_closure(closure: f64) -> f64 {
    closure / (1.0 + closure)
}

const MODULUS_TOL: f64 = 1e-9;

/// Two-modulus compression law: modulus `e1` up to `strain_break`, `e2` beyond.
/// Strains are gap-closure ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearLaw {
    pub e1_kpa: f64,
    pub e2_kpa: f64,
    pub strain_break: f64,
    /// Largest strain covered by the data the law was fitted to.
    pub max_strain: f64,
}

impl BilinearLaw {
    pub fn new(e1_kpa: f64, e2_kpa: f64, strain_break: f64, max_strain: f64) -> Result<Self, CalibrationError> {
        let law = Self {
            e1_kpa,
            e2_kpa,
            strain_break,
            max_strain,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let finite = [self.e1_kpa, self.e2_kpa, self.strain_break, self.max_strain]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.e1_kpa <= 0.0 {
            return Err(CalibrationError::InvalidModel(format!(
                "moduli must be finite and positive: {self:?}"
            )));
        }
        if self.e2_kpa < self.e1_kpa * (1.0 - MODULUS_TOL) {
            return Err(CalibrationError::InvalidModel(format!(
                "large-strain modulus {} kPa is below small-strain modulus {} kPa",
                self.e2_kpa, self.e1_kpa
            )));
        }
        if !(self.strain_break > 0.0 && self.strain_break < 1.0) {
            return Err(CalibrationError::InvalidModel(format!(
                "strain break must lie in (0, 1), got {}",
                self.strain_break
            )));
        }
        if self.max_strain <= 0.0 {
            return Err(CalibrationError::InvalidModel(format!(
                "envelope must be positive, got {}",
                self.max_strain
            )));
        }
        Ok(())
    }

    /// Stress without the envelope check.
    pub(crate) fn stress_unchecked(&self, strain: f64) -> f64 {
        if strain <= self.strain_break {
            self.e1_kpa * strain
        } else {
            self.e1_kpa * self.strain_break + self.e2_kpa * (strain - self.strain_break)
        }
    }

    pub(crate) fn strain_unchecked(&self, pressure_kpa: f64) -> f64 {
        let p_break = self.e1_kpa * self.strain_break;
        if pressure_kpa <= p_break {
            pressure_kpa / self.e1_kpa
        } else {
            self.strain_break + (pressure_kpa - p_break) / self.e2_kpa
        }
    }

    pub fn max_pressure_kpa(&self) -> f64 {
        self.stress_unchecked(self.max_strain)
    }

    pub fn pressure_from_strain(&self, strain: f64) -> Result<f64, CalibrationError> {
        if !(strain >= 0.0 && strain <= self.max_strain) {
            return Err(CalibrationError::OutOfEnvelope {
                quantity: "strain",
                value: strain,
                limit: self.max_strain,
            });
        }
        Ok(self.stress_unchecked(strain))
    }

    pub fn strain_from_pressure(&self, pressure_kpa: f64) -> Result<f64, CalibrationError> {
        let limit = self.max_pressure_kpa();
        if !(pressure_kpa >= 0.0 && pressure_kpa <= limit) {
            return Err(CalibrationError::OutOfEnvelope {
                quantity: "pressure (kPa)",
                value: pressure_kpa,
                limit,
            });
        }
        Ok(self.strain_unchecked(pressure_kpa).min(self.max_strain))
    }

    /// Pressure for any strain, clamped into `[0, max_pressure]`.
    pub fn pressure_saturating(&self, strain: f64) -> f64 {
        self.stress_unchecked(strain.clamp(0.0, self.max_strain))
    }

    /// Secant modulus `σ / (η/d)` at the given engineering strain (kPa).
    pub fn secant_modulus(&self, normal_strain: f64) -> f64 {
        self.stress_unchecked(closure_from_normal_strain(normal_strain)) / normal_strain
    }
}

/// Linear shear compliance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearLaw {
    /// Shear displacement per unit shear force (mm/N).
    pub compliance_mm_per_n: f64,
    /// Largest displacement inside the calibrated range (mm).
    pub max_displacement_mm: f64,
}

impl ShearLaw {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.compliance_mm_per_n > 0.0 && self.compliance_mm_per_n.is_finite() && self.max_displacement_mm > 0.0 {
            Ok(())
        } else {
            Err(CalibrationError::InvalidModel(format!("invalid shear law {self:?}")))
        }
    }

    pub fn max_force_n(&self) -> f64 {
        self.max_displacement_mm / self.compliance_mm_per_n
    }

    pub fn force_from_displacement(&self, lambda_mm: f64) -> Result<f64, CalibrationError> {
        if !(lambda_mm.abs() <= self.max_displacement_mm) {
            return Err(CalibrationError::OutOfEnvelope {
                quantity: "shear displacement (mm)",
                value: lambda_mm,
                limit: self.max_displacement_mm,
            });
        }
        Ok(lambda_mm / self.compliance_mm_per_n)
    }

    pub fn displacement_from_force(&self, force_n: f64) -> Result<f64, CalibrationError> {
        let limit = self.max_force_n();
        if !(force_n.abs() <= limit) {
            return Err(CalibrationError::OutOfEnvelope {
                quantity: "shear force (N)",
                value: force_n,
                limit,
            });
        }
        Ok(force_n * self.compliance_mm_per_n)
    }
}

/// Mechanical model mapping forces to displacements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub normal: BilinearLaw,
    pub shear: ShearLaw,
    /// Kelvin-Voigt viscosity on the normal law (kPa·s); 0 disables it.
    pub damping_kpa_s: f64,
}

impl MaterialModel {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        self.normal.validate()?;
        self.shear.validate()?;
        if self.damping_kpa_s.is_finite() && self.damping_kpa_s >= 0.0 {
            Ok(())
        } else {
            Err(CalibrationError::InvalidModel(format!(
                "damping must be >= 0, got {}",
                self.damping_kpa_s
            )))
        }
    }

    pub fn pressure_from_strain(&self, strain: f64) -> Result<f64, CalibrationError> {
        self.normal.pressure_from_strain(strain)
    }

    pub fn strain_from_pressure(&self, pressure_kpa: f64) -> Result<f64, CalibrationError> {
        self.normal.strain_from_pressure(pressure_kpa)
    }

    pub fn shear_force_from_displacement(&self, lambda_mm: f64) -> Result<f64, CalibrationError> {
        self.shear.force_from_displacement(lambda_mm)
    }

    pub fn shear_displacement_from_force(&self, force_n: f64) -> Result<f64, CalibrationError> {
        self.shear.displacement_from_force(force_n)
    }
}

/// Kelvin-Voigt state for time-stepping the normal law under a pressure history.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ViscoelasticState {
    pub strain: f64,
}

impl ViscoelasticState {
    /// Implicit Euler step of `c·ė + σ(e) = p`. Falls back to the quasi-static
    /// strain when damping is zero.
    pub fn advance(&mut self, material: &MaterialModel, pressure_kpa: f64, dt_s: f64) -> f64 {
        let law = &material.normal;
        let c = material.damping_kpa_s;
        if c == 0.0 || dt_s <= 0.0 {
            self.strain = law.strain_unchecked(pressure_kpa.max(0.0));
        } else {
            let r = c / dt_s;
            let soft = (pressure_kpa + r * self.strain) / (law.e1_kpa + r);
            self.strain = if soft <= law.strain_break {
                soft
            } else {
                (pressure_kpa - law.e1_kpa * law.strain_break + law.e2_kpa * law.strain_break + r * self.strain)
                    / (law.e2_kpa + r)
            };
            self.strain = self.strain.max(0.0);
        }
        self.strain
    }
}
