use serde::{Deserialize, Serialize};

use super::fit::{fit_shear_compliance, MAX_RECORD_STRAIN, SHEAR_PINS};
use super::material::{closure_from_normal_strain, normal_strain_from_closure, BilinearLaw, MaterialModel};
use super::CalibrationError;
use crate::physics::{DeformationState, ParasiticModel, TaxelModel};

/// Sensitivity figures the calibrated chain must reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTargets {
    /// Average ΔC/C0 slope at low pressure (%/kPa).
    pub low_slope_pct_per_kpa: f64,
    /// Average ΔC/C0 slope at `high_pressure_kpa` (%/kPa).
    pub high_slope_pct_per_kpa: f64,
    pub high_pressure_kpa: f64,
    /// Compressive secant modulus (kPa) at `secant_strain` (engineering strain).
    pub secant_modulus_kpa: f64,
    pub secant_strain: f64,
}

/// Named sets of sensitivity targets. Calibration always targets one of
/// these; the two low-pressure figures are never blended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityPreset {
    /// 2.8 %/kPa at low pressure, 0.3 %/kPa at 80 kPa.
    LowPressure,
    /// 1.5 %/kPa from a straight-line fit over a wider load region.
    LinearRegion,
}

impl SensitivityPreset {
    pub fn targets(self) -> SensitivityTargets {
        let low = match self {
            SensitivityPreset::LowPressure => 2.8,
            SensitivityPreset::LinearRegion => 1.5,
        };
        SensitivityTargets {
            low_slope_pct_per_kpa: low,
            high_slope_pct_per_kpa: 0.3,
            high_pressure_kpa: 80.0,
            secant_modulus_kpa: 160.0,
            secant_strain: 0.2,
        }
    }
}

/// Mean of `C0 / (C0 + offset_i)`: the factor by which parasitics dilute ΔC/C0.
pub fn parasitic_dilution(c0_pf: f64, parasitics: &ParasiticModel) -> f64 {
    parasitics.offsets_pf.iter().map(|o| c0_pf / (c0_pf + o)).sum::<f64>() / 4.0
}

/// Solves the bilinear law that hits the targets exactly.
///
/// With the law written in gap-closure strain `e`, the ideal average ΔC/C0
/// under pure pressure is `k·e` (`k` the parasitic dilution), so each branch
/// slope pins one modulus and the secant point pins the breakpoint.
pub fn calibrate_normal_law(
    targets: &SensitivityTargets,
    c0_pf: f64,
    parasitics: &ParasiticModel,
) -> Result<BilinearLaw, CalibrationError> {
    let k = parasitic_dilution(c0_pf, parasitics);
    let e1 = 100.0 * k / targets.low_slope_pct_per_kpa;
    let e2 = 100.0 * k / targets.high_slope_pct_per_kpa;
    let secant_closure = closure_from_normal_strain(targets.secant_strain);
    let secant_stress = targets.secant_modulus_kpa * targets.secant_strain;
    if e2 <= e1 {
        return Err(CalibrationError::InconsistentTargets(
            "high-pressure slope must be below the low-pressure slope".into(),
        ));
    }
    let strain_break = (e2 * secant_closure - secant_stress) / (e2 - e1);
    if !(strain_break > 0.0 && strain_break < secant_closure) {
        return Err(CalibrationError::InconsistentTargets(format!(
            "secant modulus {} kPa is unreachable with moduli {e1:.1}/{e2:.1} kPa",
            targets.secant_modulus_kpa
        )));
    }
    let law = BilinearLaw::new(e1, e2, strain_break, MAX_RECORD_STRAIN)?;
    if law.e1_kpa * law.strain_break >= targets.high_pressure_kpa || law.max_pressure_kpa() < targets.high_pressure_kpa
    {
        return Err(CalibrationError::InconsistentTargets(
            "high-pressure target does not fall on the stiff branch".into(),
        ));
    }
    Ok(law)
}

/// Material calibrated to `preset` for the given taxel, with the shear law
/// fitted to the reported shear operating points (reference height `d`).
pub fn calibrate_material(
    preset: SensitivityPreset,
    geometry: &crate::physics::TaxelGeometry,
    parasitics: &ParasiticModel,
) -> Result<MaterialModel, CalibrationError> {
    let normal = calibrate_normal_law(&preset.targets(), geometry.c0_pf(), parasitics)?;
    let shear = fit_shear_compliance(&SHEAR_PINS, geometry.d_mm)?.law;
    Ok(MaterialModel {
        normal,
        shear,
        damping_kpa_s: 0.0,
    })
}

impl MaterialModel {
    /// The low-pressure preset for a parasitic-free taxel of this geometry.
    pub fn calibrated_for(geometry: &crate::physics::TaxelGeometry) -> Self {
        calibrate_material(SensitivityPreset::LowPressure, geometry, &ParasiticModel::none())
            .expect("built-in sensitivity targets are consistent")
    }
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self::calibrated_for(&crate::physics::TaxelGeometry::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub pressure_kpa: f64,
    /// Absolute change per electrode (pF).
    pub delta_pf: [f64; 4],
    /// ΔC/C0 per electrode (%), C0 the electrode's own baseline.
    pub relative_pct: [f64; 4],
    pub mean_relative_pct: f64,
    /// Local slope d(ΔC/C0)/dP per electrode (%/kPa).
    pub slope_pct_per_kpa: [f64; 4],
    pub mean_slope_pct_per_kpa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityTable {
    /// Row closest to `pressure_kpa`.
    pub fn row_near(&self, pressure_kpa: f64) -> Option<&SensitivityRow> {
        self.rows.iter().min_by(|a, b| {
            (a.pressure_kpa - pressure_kpa)
                .abs()
                .total_cmp(&(b.pressure_kpa - pressure_kpa).abs())
        })
    }

    /// Whether the mean slope never increases from one row to the next,
    /// allowing `tol` (%/kPa) of numerical slack.
    pub fn slope_non_increasing(&self, tol: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].mean_slope_pct_per_kpa <= w[0].mean_slope_pct_per_kpa + tol)
    }

    pub fn relative_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].mean_relative_pct >= w[0].mean_relative_pct)
    }
}

pub const SENSITIVITY_SWEEP_STEP_KPA: f64 = 0.5;
pub const SENSITIVITY_SWEEP_MAX_KPA: f64 = 80.0;
const SLOPE_STEP_KPA: f64 = 1e-3;

fn response(
    model: &TaxelModel,
    pressure_kpa: f64,
    baselines: &[f64; 4],
) -> Result<([f64; 4], [f64; 4]), CalibrationError> {
    let closure = model.material.normal.strain_from_pressure(pressure_kpa)?;
    let def = DeformationState::new(model.geometry.d_mm * normal_strain_from_closure(closure), 0.0, 0.0);
    let c = model.mutual_capacitances(&def, None, 1.0)?;
    let mut delta = [0.0; 4];
    let mut rel = [0.0; 4];
    for i in 0..4 {
        delta[i] = c[i] - baselines[i];
        rel[i] = 100.0 * delta[i] / baselines[i];
    }
    Ok((delta, rel))
}

/// Sweeps pure pressure 0..80 kPa through the forward chain and tabulates the
/// response of each electrode.
pub fn sensitivity_curve(model: &TaxelModel) -> Result<SensitivityTable, CalibrationError> {
    let baselines = model.mutual_capacitances(&DeformationState::REST, None, 1.0)?;
    let n = (SENSITIVITY_SWEEP_MAX_KPA / SENSITIVITY_SWEEP_STEP_KPA).round() as usize;
    let mut rows = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let p = i as f64 * SENSITIVITY_SWEEP_STEP_KPA;
        let (delta_pf, relative_pct) = response(model, p, &baselines)?;
        let lo = (p - SLOPE_STEP_KPA).max(0.0);
        let hi = p + SLOPE_STEP_KPA;
        let (_, rel_lo) = response(model, lo, &baselines)?;
        let (_, rel_hi) = response(model, hi, &baselines)?;
        let slope_pct_per_kpa: [f64; 4] = std::array::from_fn(|j| (rel_hi[j] - rel_lo[j]) / (hi - lo));
        rows.push(SensitivityRow {
            pressure_kpa: p,
            delta_pf,
            relative_pct,
            mean_relative_pct: relative_pct.iter().sum::<f64>() / 4.0,
            slope_pct_per_kpa,
            mean_slope_pct_per_kpa: slope_pct_per_kpa.iter().sum::<f64>() / 4.0,
        });
    }
    Ok(SensitivityTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::TaxelGeometry;

    #[test]
    fn low_pressure_preset_solution() {
        let law =
            calibrate_normal_law(&SensitivityPreset::LowPressure.targets(), 10.0, &ParasiticModel::none()).unwrap();
        assert!((law.e1_kpa - 100.0 / 2.8).abs() < 1e-12);
        assert!((law.e2_kpa - 100.0 / 0.3).abs() < 1e-9);
        // secant over 0..20% engineering strain is exactly the target
        assert!((law.secant_modulus(0.2) - 160.0).abs() < 1e-9);
    }

    #[test]
    fn presets_are_distinct() {
        let a = calibrate_normal_law(&SensitivityPreset::LowPressure.targets(), 10.0, &ParasiticModel::none()).unwrap();
        let b = calibrate_normal_law(
            &SensitivityPreset::LinearRegion.targets(),
            10.0,
            &ParasiticModel::none(),
        )
        .unwrap();
        assert!(b.e1_kpa > a.e1_kpa);
        assert!((b.secant_modulus(0.2) - 160.0).abs() < 1e-9);
    }

    #[test]
    fn curve_hits_targets_and_flattens() {
        let model = TaxelModel::default();
        let table = sensitivity_curve(&model).unwrap();
        let low = table.row_near(1.0).unwrap().mean_slope_pct_per_kpa;
        let high = table.row_near(80.0).unwrap().mean_slope_pct_per_kpa;
        assert!((low - 2.8).abs() < 1e-6, "{low}");
        assert!((high - 0.3).abs() < 1e-6, "{high}");
        assert!(table.slope_non_increasing(1e-6));
        assert!(table.relative_monotone());
    }

    #[test]
    fn parasitics_dilute_but_calibration_compensates() {
        let geometry = TaxelGeometry::default();
        let parasitics = ParasiticModel::shielded(geometry.c0_pf()).unwrap();
        let mut model = TaxelModel::ideal(geometry);
        model.material = calibrate_material(SensitivityPreset::LowPressure, &geometry, &parasitics).unwrap();
        model.parasitics = parasitics;
        let table = sensitivity_curve(&model).unwrap();
        let low = table.row_near(1.0).unwrap().mean_slope_pct_per_kpa;
        assert!((low - 2.8).abs() < 1e-6, "{low}");
    }

    #[test]
    fn impossible_targets_are_rejected() {
        let mut t = SensitivityPreset::LowPressure.targets();
        t.high_slope_pct_per_kpa = 5.0;
        assert!(calibrate_normal_law(&t, 10.0, &ParasiticModel::none()).is_err());
        let mut t = SensitivityPreset::LowPressure.targets();
        t.secant_modulus_kpa = 5.0;
        assert!(calibrate_normal_law(&t, 10.0, &ParasiticModel::none()).is_err());
    }
}
