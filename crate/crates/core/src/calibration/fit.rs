use serde::{Deserialize, Serialize};

use super::material::{BilinearLaw, ShearLaw};
use super::CalibrationError;

/// Breakpoint search resolution (strain).
pub const BREAK_GRID_STEP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Loading,
    Unloading,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressStrainSample {
    /// Sample time (s); needed only for the damping estimate.
    pub t_s: Option<f64>,
    /// Gap-closure strain.
    pub strain: f64,
    pub stress_kpa: f64,
    pub branch: Branch,
}

/// One test run: a monotone ramp, or a loading/unloading cycle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StressStrainRecord {
    pub samples: Vec<StressStrainSample>,
}

impl StressStrainRecord {
    /// Loading-only record from `(strain, stress)` pairs.
    pub fn loading(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self {
            samples: points
                .into_iter()
                .map(|(strain, stress_kpa)| StressStrainSample {
                    t_s: None,
                    strain,
                    stress_kpa,
                    branch: Branch::Loading,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.strain.is_finite() && (0.0..=MAX_RECORD_STRAIN).contains(&s.strain)) {
                return Err(CalibrationError::InvalidData(format!(
                    "sample {i}: strain {} outside [0, {MAX_RECORD_STRAIN}]",
                    s.strain
                )));
            }
            if !(s.stress_kpa.is_finite() && s.stress_kpa >= 0.0) {
                return Err(CalibrationError::InvalidData(format!(
                    "sample {i}: stress {} kPa must be >= 0",
                    s.stress_kpa
                )));
            }
        }
        Ok(())
    }

    fn is_timed_cycle(&self) -> bool {
        self.samples.len() >= 3
            && self.samples.iter().all(|s| s.t_s.is_some())
            && self.samples.iter().any(|s| s.branch == Branch::Loading)
            && self.samples.iter().any(|s| s.branch == Branch::Unloading)
    }
}

pub const MAX_RECORD_STRAIN: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialFit {
    pub law: BilinearLaw,
    pub damping_kpa_s: f64,
    pub rms_residual_kpa: f64,
    pub samples_used: usize,
}

/// Least-squares bilinear fit on the loading branches.
///
/// For each breakpoint on a [`BREAK_GRID_STEP`] grid the two moduli come from
/// ordinary least squares (the law is linear in them once the break is
/// fixed); the breakpoint with the smallest residual wins. When timed
/// loading/unloading cycles are present, the viscous coefficient is taken
/// from the hysteresis loop area first and its contribution removed from the
/// loading samples before the elastic fit.
pub fn fit_material(records: &[StressStrainRecord]) -> Result<MaterialFit, CalibrationError> {
    for r in records {
        r.validate()?;
    }
    let damping = estimate_damping(records);

    let mut points: Vec<(f64, f64)> = Vec::new();
    for r in records {
        let rates = strain_rates(r);
        for (i, s) in r.samples.iter().enumerate() {
            if s.branch != Branch::Loading {
                continue;
            }
            let viscous = damping * rates.as_ref().map_or(0.0, |v| v[i]);
            points.push((s.strain, s.stress_kpa - viscous));
        }
    }

    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).filter(|s| *s > 0.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(CalibrationError::InsufficientData(format!(
            "need at least 2 distinct non-zero loading strains, got {}",
            distinct.len()
        )));
    }
    let max_strain = *distinct.last().unwrap();

    let mut best: Option<(f64, f64, f64, f64)> = None;
    let mut k = 1u32;
    loop {
        let b = f64::from(k) * BREAK_GRID_STEP;
        if b >= max_strain || b >= 1.0 {
            break;
        }
        k += 1;
        if let Some((e1, e2, sse)) = solve_for_break(&points, b) {
            if best.is_none_or(|(.., best_sse)| sse < best_sse) {
                best = Some((e1, e2, b, sse));
            }
        }
    }
    let Some(grid_best) = best else {
        return Err(CalibrationError::DegenerateData(
            "no breakpoint separates the samples into two branches".into(),
        ));
    };
    let (e1, e2, b, sse) = refine_break(&points, grid_best, max_strain);
    let law = BilinearLaw::new(e1, e2, b, max_strain)?;
    Ok(MaterialFit {
        law,
        damping_kpa_s: damping,
        rms_residual_kpa: (sse / points.len() as f64).sqrt(),
        samples_used: points.len(),
    })
}

/// Golden-section search for the break within one grid step of the best grid
/// point, so breaks that fall between grid nodes are still recovered.
fn refine_break(points: &[(f64, f64)], grid_best: (f64, f64, f64, f64), max_strain: f64) -> (f64, f64, f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let sse_at = |b: f64| solve_for_break(points, b).map(|(e1, e2, sse)| (e1, e2, b, sse));
    let mut lo = (grid_best.2 - BREAK_GRID_STEP).max(BREAK_GRID_STEP * 1e-3);
    let mut hi = (grid_best.2 + BREAK_GRID_STEP).min(max_strain * (1.0 - 1e-12));
    let cost = |b: f64| sse_at(b).map_or(f64::INFINITY, |r| r.3);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    while hi - lo > 1e-13 * hi.max(1.0) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = cost(x2);
        }
    }
    match sse_at(0.5 * (lo + hi)) {
        Some(r) if r.3 <= grid_best.3 => r,
        _ => grid_best,
    }
}

/// Moduli and squared residual for a fixed break, or `None` when one branch
/// holds no information.
fn solve_for_break(points: &[(f64, f64)], b: f64) -> Option<(f64, f64, f64)> {
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut below = false;
    let mut above = false;
    for &(s, y) in points {
        let f1 = s.min(b);
        let f2 = (s - b).max(0.0);
        below |= s > 0.0 && s <= b;
        above |= s > b;
        a11 += f1 * f1;
        a12 += f1 * f2;
        a22 += f2 * f2;
        r1 += f1 * y;
        r2 += f2 * y;
    }
    if !(below && above) {
        return None;
    }
    let det = a11 * a22 - a12 * a12;
    if det <= 1e-14 * a11 * a22 {
        return None;
    }
    let e1 = (a22 * r1 - a12 * r2) / det;
    let e2 = (a11 * r2 - a12 * r1) / det;
    let sse = points
        .iter()
        .map(|&(s, y)| {
            let fit = e1 * s.min(b) + e2 * (s - b).max(0.0);
            (y - fit).powi(2)
        })
        .sum();
    Some((e1, e2, sse))
}

/// Central-difference strain rate per sample, `None` for untimed records.
fn strain_rates(r: &StressStrainRecord) -> Option<Vec<f64>> {
    if !r.is_timed_cycle() {
        return None;
    }
    let n = r.samples.len();
    let t: Vec<f64> = r.samples.iter().map(|s| s.t_s.unwrap_or(0.0)).collect();
    let e: Vec<f64> = r.samples.iter().map(|s| s.strain).collect();
    Some(
        (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
                let dt = t[hi] - t[lo];
                if dt > 0.0 {
                    (e[hi] - e[lo]) / dt
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// Viscous coefficient from `∮σ de = c ∫ė² dt`, summed over all timed cycles.
fn estimate_damping(records: &[StressStrainRecord]) -> f64 {
    let mut loop_area = 0.0;
    let mut rate_energy = 0.0;
    for r in records.iter().filter(|r| r.is_timed_cycle()) {
        let s = &r.samples;
        let n = s.len();
        for i in 0..n {
            let (a, b) = (&s[i], &s[(i + 1) % n]);
            let de = b.strain - a.strain;
            loop_area += 0.5 * (a.stress_kpa + b.stress_kpa) * de;
            if i + 1 < n {
                let dt = b.t_s.unwrap_or(0.0) - a.t_s.unwrap_or(0.0);
                if dt > 0.0 {
                    rate_energy += de * de / dt;
                }
            }
        }
    }
    if loop_area > 0.0 && rate_energy > 0.0 {
        loop_area / rate_energy
    } else {
        0.0
    }
}

/// Reported shear operating points: (force N, shear strain).
pub const SHEAR_PINS: [(f64, f64); 2] = [(0.2, 0.13), (0.8, 0.53)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearFit {
    pub law: ShearLaw,
    /// Relative force error at each pin, `(predicted − pinned) / pinned`.
    pub relative_residuals: Vec<f64>,
}

/// Secant-linear shear compliance through the origin, least squares over the
/// `(force, strain)` pins. Strain is taken against `h_shear_mm`.
pub fn fit_shear_compliance(pins: &[(f64, f64)], h_shear_mm: f64) -> Result<ShearFit, CalibrationError> {
    if pins.is_empty() || !(h_shear_mm > 0.0) {
        return Err(CalibrationError::InsufficientData(
            "shear fit needs at least one pin and a positive reference height".into(),
        ));
    }
    let (num, den) = pins.iter().fold((0.0, 0.0), |(n, d), &(f, strain)| {
        (n + f * strain * h_shear_mm, d + f * f)
    });
    if den <= 0.0 {
        return Err(CalibrationError::DegenerateData("all shear pins at zero force".into()));
    }
    let compliance = num / den;
    let max_strain = pins.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let law = ShearLaw {
        compliance_mm_per_n: compliance,
        max_displacement_mm: max_strain * h_shear_mm,
    };
    law.validate()?;
    let relative_residuals = pins
        .iter()
        .map(|&(f, strain)| (strain * h_shear_mm / compliance - f) / f)
        .collect();
    Ok(ShearFit {
        law,
        relative_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(law: &BilinearLaw, n: usize, max: f64) -> StressStrainRecord {
        StressStrainRecord::loading((0..=n).map(|i| {
            let s = max * i as f64 / n as f64;
            (s, law.stress_unchecked(s))
        }))
    }

    #[test]
    fn recovers_generating_parameters() {
        let truth = BilinearLaw::new(120.0, 400.0, 0.2, 0.5).unwrap();
        let fit = fit_material(&[synth(&truth, 200, 0.5)]).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.law.e1_kpa, 120.0) < 1e-6);
        assert!(rel(fit.law.e2_kpa, 400.0) < 1e-6);
        assert!(rel(fit.law.strain_break, 0.2) < 1e-6);
        assert_eq!(fit.damping_kpa_s, 0.0);
    }

    #[test]
    fn off_grid_break_is_recovered() {
        let truth = BilinearLaw::new(35.7, 333.3, 0.17248, 0.5).unwrap();
        let fit = fit_material(&[synth(&truth, 173, 0.5)]).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.law.strain_break, 0.17248) < 1e-6, "{:?}", fit.law);
        assert!(rel(fit.law.e1_kpa, 35.7) < 1e-6);
        assert!(rel(fit.law.e2_kpa, 333.3) < 1e-6);
    }

    #[test]
    fn single_modulus_gives_equal_moduli() {
        let rec = StressStrainRecord::loading((0..=50).map(|i| {
            let s = 0.01 * i as f64;
            (s, 160.0 * s)
        }));
        let fit = fit_material(&[rec]).unwrap();
        assert!((fit.law.e1_kpa - 160.0).abs() < 1e-9);
        assert!((fit.law.e2_kpa - 160.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_strains_is_an_error() {
        let rec = StressStrainRecord::loading([(0.1, 10.0), (0.1, 10.1), (0.0, 0.0)]);
        assert!(matches!(
            fit_material(&[rec]),
            Err(CalibrationError::InsufficientData(_))
        ));
    }

    #[test]
    fn samples_on_one_branch_are_degenerate() {
        // both non-zero strains lie inside the first grid cell
        let rec = StressStrainRecord::loading([(0.001, 0.1), (0.002, 0.2), (0.003, 0.3)]);
        assert!(matches!(fit_material(&[rec]), Err(CalibrationError::DegenerateData(_))));
    }

    #[test]
    fn out_of_range_samples_rejected() {
        let rec = StressStrainRecord::loading([(0.1, 10.0), (0.7, 100.0)]);
        assert!(matches!(fit_material(&[rec]), Err(CalibrationError::InvalidData(_))));
    }

    #[test]
    fn scaling_stress_scales_moduli() {
        let truth = BilinearLaw::new(90.0, 310.0, 0.15, 0.45).unwrap();
        let base = synth(&truth, 90, 0.45);
        let a = fit_material(std::slice::from_ref(&base)).unwrap();
        for k in [2.0, 3.7] {
            let mut scaled = base.clone();
            for s in &mut scaled.samples {
                s.stress_kpa *= k;
            }
            let b = fit_material(&[scaled]).unwrap();
            assert_eq!(b.law.strain_break, a.law.strain_break);
            assert!((b.law.e1_kpa - k * a.law.e1_kpa).abs() <= 1e-12 * b.law.e1_kpa);
            assert!((b.law.e2_kpa - k * a.law.e2_kpa).abs() <= 1e-12 * b.law.e2_kpa);
        }
    }

    #[test]
    fn damping_from_hysteresis_loop() {
        // Kelvin-Voigt response to a 0.1 Hz raised-cosine strain cycle
        let truth = BilinearLaw::new(60.0, 300.0, 0.15, 0.4).unwrap();
        let c = 20.0;
        let amp = 0.4;
        let omega = 2.0 * std::f64::consts::PI * 0.1;
        let n = 4000;
        let samples = (0..n)
            .map(|i| {
                let t = 10.0 * i as f64 / n as f64;
                let e = 0.5 * amp * (1.0 - (omega * t).cos());
                let rate = 0.5 * amp * omega * (omega * t).sin();
                StressStrainSample {
                    t_s: Some(t),
                    strain: e,
                    stress_kpa: (truth.stress_unchecked(e) + c * rate).max(0.0),
                    branch: if rate >= 0.0 {
                        Branch::Loading
                    } else {
                        Branch::Unloading
                    },
                }
            })
            .collect();
        let fit = fit_material(&[StressStrainRecord { samples }]).unwrap();
        // clipping at zero stress removes a sliver of the loop near e = 0
        assert!((fit.damping_kpa_s / c - 1.0).abs() < 0.02, "{}", fit.damping_kpa_s);
        assert!((fit.law.e2_kpa / 300.0 - 1.0).abs() < 0.02, "{:?}", fit.law);
    }

    #[test]
    fn shear_pins() {
        let fit = fit_shear_compliance(&SHEAR_PINS, 1.5).unwrap();
        // least squares through the origin: Σ F·λ / Σ F²
        let expected = (0.2 * 0.13 * 1.5 + 0.8 * 0.53 * 1.5) / (0.04 + 0.64);
        assert!((fit.law.compliance_mm_per_n - expected).abs() < 1e-15);
        assert!(fit.relative_residuals.iter().all(|r| r.abs() < 0.15));
        assert!((fit.law.max_displacement_mm - 0.795).abs() < 1e-12);
        let f = fit.law.force_from_displacement(0.13 * 1.5).unwrap();
        assert!((f - 0.2).abs() / 0.2 < 0.02);
        let f = fit.law.force_from_displacement(0.53 * 1.5).unwrap();
        assert!((f - 0.8).abs() / 0.8 < 0.02);
        assert_eq!(fit.law.force_from_displacement(0.0).unwrap(), 0.0);
    }
}
