use serde::{Deserialize, Serialize};

use super::PhysicsError;

/// Lumped parallel-plate description of one taxel.
///
/// The four top electrodes each overlap the shared bottom electrode by an
/// `l_mm` x `w_mm` strip. E1/E3 form the x-axis pair and E2/E4 the y-axis
/// pair (see [`Axis`]). `eps_w_pf` is the permittivity-width product lumped
/// into a single calibration constant, so the rest capacitance of every
/// electrode is `eps_w * L / d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxelGeometry {
    /// Dielectric gap at rest (mm).
    pub d_mm: f64,
    /// Electrode overlap length at rest, along the shear axis (mm).
    pub l_mm: f64,
    /// Electrode overlap width (mm).
    pub w_mm: f64,
    /// Lumped permittivity-width product (pF).
    pub eps_w_pf: f64,
}

impl Default for TaxelGeometry {
    /// 1.5 mm pillars, 3 x 3 mm top electrodes overlapping the bottom
    /// electrode by half, and `eps_w` chosen for a 10 pF ideal rest value.
    fn default() -> Self {
        Self {
            d_mm: 1.5,
            l_mm: 1.5,
            w_mm: 3.0,
            eps_w_pf: 10.0,
        }
    }
}

impl TaxelGeometry {
    pub fn new(d_mm: f64, l_mm: f64, w_mm: f64, eps_w_pf: f64) -> Result<Self, PhysicsError> {
        let geom = Self {
            d_mm,
            l_mm,
            w_mm,
            eps_w_pf,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        for (name, v) in [
            ("d", self.d_mm),
            ("L", self.l_mm),
            ("W", self.w_mm),
            ("eps_w", self.eps_w_pf),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PhysicsError::InvalidParameter(format!(
                    "geometry {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Ideal rest capacitance of each electrode (pF).
    pub fn c0_pf(&self) -> f64 {
        self.eps_w_pf * self.l_mm / self.d_mm
    }

    /// Capacitance change per mm of shear for one electrode at rest gap (pF/mm).
    pub fn shear_gain_pf_per_mm(&self) -> f64 {
        self.eps_w_pf / self.d_mm
    }
}

/// Electrode pairing of the taxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    /// Indices into a `[C1, C2, C3, C4]` array as `(loses overlap, gains overlap)`
    /// for a positive shear along this axis.
    pub const fn pair(self) -> (usize, usize) {
        match self {
            // +x moves E3 onto the bottom electrode and E1 off it.
            Axis::X => (0, 2),
            // +y moves E2 onto the bottom electrode and E4 off it.
            Axis::Y => (3, 1),
        }
    }
}

/// Displacement of the top layer relative to the bottom electrode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeformationState {
    /// Normal displacement toward the bottom electrode (mm).
    pub eta_mm: f64,
    /// Shear along E1 -> E3 (mm). Positive increases C3.
    pub lambda_x_mm: f64,
    /// Shear along E4 -> E2 (mm). Positive increases C2.
    pub lambda_y_mm: f64,
}

impl DeformationState {
    pub const REST: Self = Self {
        eta_mm: 0.0,
        lambda_x_mm: 0.0,
        lambda_y_mm: 0.0,
    };

    pub fn new(eta_mm: f64, lambda_x_mm: f64, lambda_y_mm: f64) -> Self {
        Self {
            eta_mm,
            lambda_x_mm,
            lambda_y_mm,
        }
    }

    pub fn lambda(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.lambda_x_mm,
            Axis::Y => self.lambda_y_mm,
        }
    }

    /// Checks `0 <= eta < d` and `|lambda| < L` on both axes.
    pub fn validate(&self, geom: &TaxelGeometry) -> Result<(), PhysicsError> {
        if !(self.eta_mm.is_finite() && self.eta_mm >= 0.0 && self.eta_mm < geom.d_mm) {
            return Err(PhysicsError::GapClosed {
                eta_mm: self.eta_mm,
                d_mm: geom.d_mm,
            });
        }
        for axis in [Axis::X, Axis::Y] {
            let lambda = self.lambda(axis);
            if !(lambda.is_finite() && lambda.abs() < geom.l_mm) {
                return Err(PhysicsError::OverlapLost {
                    axis,
                    lambda_mm: lambda,
                    l_mm: geom.l_mm,
                });
            }
        }
        Ok(())
    }
}

/// Fringe-free parallel-plate capacitances `[C1, C2, C3, C4]` in pF.
///
/// ```text
/// C1 = εW(L − λx)/(d − η)   C3 = εW(L + λx)/(d − η)
/// C2 = εW(L + λy)/(d − η)   C4 = εW(L − λy)/(d − η)
/// ```
pub fn ideal_capacitances(geom: &TaxelGeometry, def: &DeformationState) -> Result<[f64; 4], PhysicsError> {
    geom.validate()?;
    def.validate(geom)?;
    let gap = geom.d_mm - def.eta_mm;
    let k = geom.eps_w_pf / gap;
    let l = geom.l_mm;
    Ok([
        k * (l - def.lambda_x_mm),
        k * (l + def.lambda_y_mm),
        k * (l + def.lambda_x_mm),
        k * (l - def.lambda_y_mm),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_geom() -> TaxelGeometry {
        TaxelGeometry::new(3.0, 1.5, 3.0, 20.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rest_state_is_c0_everywhere() {
        let g = example_geom();
        assert_eq!(g.c0_pf(), 10.0);
        let c = ideal_capacitances(&g, &DeformationState::REST).unwrap();
        assert_eq!(c, [10.0; 4]);
    }

    #[test]
    fn compressed_and_sheared_example() {
        let c = ideal_capacitances(&example_geom(), &DeformationState::new(0.3, 0.15, 0.0)).unwrap();
        // 20 * 1.35 / 2.7, 20 * 1.5 / 2.7, 20 * 1.65 / 2.7
        let expected = [10.0, 100.0 / 9.0, 110.0 / 9.0, 100.0 / 9.0];
        for (got, want) in c.iter().zip(expected) {
            assert!(close(*got, want, 1e-12), "{got} vs {want}");
        }
        assert!(close(c[1], 11.1111, 1e-4));
        assert!(close(c[2], 12.2222, 1e-4));
    }

    #[test]
    fn uniform_compression() {
        let c = ideal_capacitances(&example_geom(), &DeformationState::new(0.6, 0.0, 0.0)).unwrap();
        for v in c {
            assert!(close(v, 12.5, 1e-12));
        }
    }

    #[test]
    fn rejects_closed_gap_and_lost_overlap() {
        let g = example_geom();
        assert!(matches!(
            ideal_capacitances(&g, &DeformationState::new(3.0, 0.0, 0.0)),
            Err(PhysicsError::GapClosed { .. })
        ));
        assert!(matches!(
            ideal_capacitances(&g, &DeformationState::new(-0.1, 0.0, 0.0)),
            Err(PhysicsError::GapClosed { .. })
        ));
        assert!(matches!(
            ideal_capacitances(&g, &DeformationState::new(0.0, 0.0, -1.5)),
            Err(PhysicsError::OverlapLost { axis: Axis::Y, .. })
        ));
    }

    #[test]
    fn default_geometry_matches_pillar_dimensions() {
        let g = TaxelGeometry::default();
        assert_eq!(g.d_mm, 1.5);
        // half of a 3 mm electrode overlaps the bottom plate
        assert_eq!(g.l_mm, 1.5);
        assert_eq!(g.w_mm, 3.0);
        assert_eq!(g.c0_pf(), 10.0);
    }
}
