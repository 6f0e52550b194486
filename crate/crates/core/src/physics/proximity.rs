use serde::{Deserialize, Serialize};

use super::PhysicsError;

/// An object hovering over or touching the taxel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityStimulus {
    /// Distance from the sensor surface (mm); 0 is contact.
    pub distance_mm: f64,
    /// `true` for a finger or grounded metal, `false` for an insulator.
    pub grounded: bool,
}

impl ProximityStimulus {
    pub fn finger(distance_mm: f64) -> Self {
        Self {
            distance_mm,
            grounded: true,
        }
    }

    pub fn insulator(distance_mm: f64) -> Self {
        Self {
            distance_mm,
            grounded: false,
        }
    }
}

/// Shape of the mutual-capacitance drop as a grounded object approaches.
///
/// `factor(z) = 1 − delta_contact · g(z / z_max)` where `g` is a normalized
/// exponential falling from 1 at contact to 0 at `z_max`. `shape` is the
/// decay rate of that exponential: 0 gives a straight line, larger values
/// concentrate the drop close to the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityParams {
    pub z_max_mm: f64,
    /// Fractional drop at contact.
    pub delta_contact: f64,
    pub shape: f64,
    /// Fractional rise caused by an insulator in contact.
    pub insulator_rise: f64,
    /// Distance below which an insulator counts as touching (mm).
    pub insulator_contact_mm: f64,
}

impl Default for ProximityParams {
    fn default() -> Self {
        Self::average()
    }
}

impl ProximityParams {
    /// Average drop across the four electrodes for a finger approached from 15 mm.
    pub fn average() -> Self {
        Self {
            z_max_mm: 15.0,
            delta_contact: 0.147,
            shape: 3.0,
            insulator_rise: 0.03,
            insulator_contact_mm: 0.5,
        }
    }

    /// Drop seen on a light fingertip contact (10-12% range; midpoint).
    pub fn light_contact() -> Self {
        Self {
            delta_contact: 0.11,
            ..Self::average()
        }
    }

    /// No proximity response at all.
    pub fn none() -> Self {
        Self {
            delta_contact: 0.0,
            insulator_rise: 0.0,
            ..Self::average()
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let ok = self.z_max_mm.is_finite()
            && self.z_max_mm > 0.0
            && (0.0..1.0).contains(&self.delta_contact)
            && self.shape.is_finite()
            && self.shape.abs() <= MAX_SHAPE
            && (0.0..=0.03).contains(&self.insulator_rise)
            && self.insulator_contact_mm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(PhysicsError::InvalidParameter(format!(
                "invalid proximity parameters {self:?}"
            )))
        }
    }
}

pub(crate) const MAX_SHAPE: f64 = 50.0;

/// Normalized decay profile: 1 at `u = 0`, 0 at `u >= 1`, monotone between.
pub fn decay_profile(u: f64, shape: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    if shape.abs() < 1e-9 {
        return 1.0 - u;
    }
    // (e^{-k u} - e^{-k}) / (1 - e^{-k}), written with expm1 for small k
    let num = (-shape * u).exp_m1() - (-shape).exp_m1();
    let den = -(-shape).exp_m1();
    (num / den).clamp(0.0, 1.0)
}

/// Multiplicative factor applied to all four mutual capacitances.
pub fn proximity_factor(prox: &ProximityStimulus, params: &ProximityParams) -> Result<f64, PhysicsError> {
    if !(prox.distance_mm.is_finite() && prox.distance_mm >= 0.0) {
        return Err(PhysicsError::NegativeDistance(prox.distance_mm));
    }
    if prox.grounded {
        let u = prox.distance_mm / params.z_max_mm;
        Ok(1.0 - params.delta_contact * decay_profile(u, params.shape))
    } else if prox.distance_mm <= params.insulator_contact_mm {
        Ok(1.0 + params.insulator_rise)
    } else {
        Ok(1.0)
    }
}

/// Self-capacitance of the top ground plane when it is switched to the
/// self-capacitance converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfCapParams {
    pub baseline_pf: f64,
    /// Rise at contact with a finger (pF).
    pub delta_contact_pf: f64,
    pub z_max_mm: f64,
    pub shape: f64,
}

impl Default for SelfCapParams {
    fn default() -> Self {
        Self {
            baseline_pf: 5.0,
            delta_contact_pf: 2.0,
            z_max_mm: 15.0,
            shape: 3.0,
        }
    }
}

impl SelfCapParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let ok = self.baseline_pf > 0.0
            && self.delta_contact_pf > 0.0
            && self.z_max_mm > 0.0
            && self.shape.is_finite()
            && self.shape.abs() <= MAX_SHAPE;
        if ok {
            Ok(())
        } else {
            Err(PhysicsError::InvalidParameter(format!(
                "invalid self-capacitance parameters {self:?}"
            )))
        }
    }
}

/// Self-capacitance reading (pF). Rises as a grounded object approaches and
/// sits at baseline beyond `z_max` or when nothing is present.
pub fn self_capacitance(prox: Option<&ProximityStimulus>, params: &SelfCapParams) -> Result<f64, PhysicsError> {
    let Some(prox) = prox else {
        return Ok(params.baseline_pf);
    };
    if !(prox.distance_mm.is_finite() && prox.distance_mm >= 0.0) {
        return Err(PhysicsError::NegativeDistance(prox.distance_mm));
    }
    if !prox.grounded {
        return Ok(params.baseline_pf);
    }
    let g = decay_profile(prox.distance_mm / params.z_max_mm, params.shape);
    Ok(params.baseline_pf + params.delta_contact_pf * g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finger_factor_endpoints() {
        let p = ProximityParams::average();
        assert_eq!(proximity_factor(&ProximityStimulus::finger(15.0), &p).unwrap(), 1.0);
        assert_eq!(proximity_factor(&ProximityStimulus::finger(40.0), &p).unwrap(), 1.0);
        let contact = proximity_factor(&ProximityStimulus::finger(0.0), &p).unwrap();
        assert!((contact - 0.853).abs() < 1e-12);
    }

    #[test]
    fn insulator_rises_modestly() {
        let p = ProximityParams::average();
        let f = proximity_factor(&ProximityStimulus::insulator(0.0), &p).unwrap();
        assert!((1.0..=1.03).contains(&f));
        let far = proximity_factor(&ProximityStimulus::insulator(5.0), &p).unwrap();
        assert_eq!(far, 1.0);
    }

    #[test]
    fn negative_distance_rejected() {
        let p = ProximityParams::average();
        assert!(proximity_factor(&ProximityStimulus::finger(-1.0), &p).is_err());
    }

    #[test]
    fn profile_is_monotone_for_any_shape() {
        for shape in [-10.0, -1.0, 0.0, 1e-12, 0.5, 3.0, 20.0] {
            let mut prev = f64::INFINITY;
            for i in 0..=300 {
                let g = decay_profile(i as f64 / 300.0, shape);
                assert!(g <= prev, "shape {shape} at {i}");
                prev = g;
            }
            assert_eq!(decay_profile(0.0, shape), 1.0);
            assert_eq!(decay_profile(1.0, shape), 0.0);
        }
    }

    #[test]
    fn self_cap_sweep() {
        let p = SelfCapParams::default();
        assert_eq!(
            self_capacitance(Some(&ProximityStimulus::finger(15.0)), &p).unwrap(),
            p.baseline_pf
        );
        assert_eq!(self_capacitance(None, &p).unwrap(), p.baseline_pf);
        let mut prev = 0.0;
        for i in (0..=150).rev() {
            let z = i as f64 / 10.0;
            let v = self_capacitance(Some(&ProximityStimulus::finger(z)), &p).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let contact = self_capacitance(Some(&ProximityStimulus::finger(0.0)), &p).unwrap();
        assert_eq!(contact, p.baseline_pf + p.delta_contact_pf);
    }
}
