use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::physics::{decay_profile, ProximityParams};

const SHAPE_LIMIT: f64 = 50.0;
const SHAPE_GRID_STEP: f64 = 0.25;
const GOLDEN_ITERS: usize = 80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityFit {
    pub params: ProximityParams,
    /// RMS of (model − data) over all samples, in ΔC/C0 units (fraction).
    pub rms_residual: f64,
    pub warnings: Vec<String>,
}

/// Pool-adjacent-violators: least-squares non-decreasing fit to `y`.
fn isotonic_non_decreasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v, n))
        .collect()
}

fn model_factor(z: f64, z_max: f64, delta: f64, shape: f64) -> f64 {
    1.0 - delta * decay_profile(z / z_max, shape)
}

/// Fits the proximity decay curve to an averaged approach profile.
///
/// `profile` holds `(z mm, mean ΔC/C0)` with ΔC/C0 as a fraction (−0.147 for a
/// 14.7% drop). Values are re-referenced to the reading at `z_max` (15 mm), so
/// the fitted factor is exactly 1 there and exactly `1 − δ` at contact. Data
/// that is not monotone in `z` is replaced by its isotonic regression and a
/// warning is returned.
pub fn fit_proximity(profile: &[(f64, f64)]) -> Result<ProximityFit, CalibrationError> {
    let defaults = ProximityParams::average();
    let z_max = defaults.z_max_mm;
    let mut warnings = Vec::new();

    for (i, &(z, v)) in profile.iter().enumerate() {
        if !(z.is_finite() && z >= 0.0 && v.is_finite() && v > -1.0) {
            return Err(CalibrationError::InvalidData(format!(
                "profile sample {i}: ({z}, {v}) is not a valid (distance, ΔC/C0) pair"
            )));
        }
    }
    let mut pts: Vec<(f64, f64)> = profile.iter().copied().filter(|p| p.0 <= z_max).collect();
    if pts.len() < profile.len() {
        warnings.push(format!(
            "{} samples beyond {z_max} mm ignored",
            profile.len() - pts.len()
        ));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.first().is_none_or(|p| p.0 != 0.0) {
        return Err(CalibrationError::InsufficientData(
            "profile needs a sample at contact (z = 0)".into(),
        ));
    }
    if pts.last().is_none_or(|p| p.0 != z_max) {
        return Err(CalibrationError::InsufficientData(format!(
            "profile needs a sample at z = {z_max} mm"
        )));
    }

    let raw: Vec<f64> = pts.iter().map(|p| 1.0 + p.1).collect();
    let iso = isotonic_non_decreasing(&raw);
    if iso.iter().zip(&raw).any(|(a, b)| a != b) {
        warnings.push("profile is not monotone in distance; fitted its isotonic regression".into());
    }
    let reference = *iso.last().unwrap();
    let factors: Vec<f64> = iso.iter().map(|f| f / reference).collect();
    let delta = (1.0 - factors[0]).max(0.0);
    if delta >= 1.0 {
        return Err(CalibrationError::InvalidData("contact drop must be below 100%".into()));
    }

    let interior: Vec<(f64, f64)> = pts
        .iter()
        .zip(&factors)
        .filter(|(p, _)| p.0 > 0.0 && p.0 < z_max)
        .map(|(p, f)| (p.0, *f))
        .collect();
    let sse = |shape: f64| -> f64 {
        interior
            .iter()
            .map(|&(z, f)| (model_factor(z, z_max, delta, shape) - f).powi(2))
            .sum()
    };
    let shape = if interior.is_empty() || delta == 0.0 {
        defaults.shape
    } else {
        let n = (2.0 * SHAPE_LIMIT / SHAPE_GRID_STEP).round() as usize;
        let mut best = (-SHAPE_LIMIT, f64::INFINITY);
        for i in 0..=n {
            let k = -SHAPE_LIMIT + i as f64 * SHAPE_GRID_STEP;
            let e = sse(k);
            if e < best.1 {
                best = (k, e);
            }
        }
        golden_min(
            &sse,
            (best.0 - SHAPE_GRID_STEP).max(-SHAPE_LIMIT),
            (best.0 + SHAPE_GRID_STEP).min(SHAPE_LIMIT),
        )
    };

    let params = ProximityParams {
        delta_contact: delta,
        shape,
        ..defaults
    };
    params.validate()?;
    let rms_residual = (pts
        .iter()
        .map(|&(z, v)| (model_factor(z, z_max, delta, shape) * reference - 1.0 - v).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(ProximityFit {
        params,
        rms_residual,
        warnings,
    })
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{proximity_factor, ProximityStimulus};

    #[test]
    fn two_point_profile_pins_endpoints() {
        let fit = fit_proximity(&[(15.0, 0.0), (0.0, -0.147)]).unwrap();
        let p = fit.params;
        let at = |z| proximity_factor(&ProximityStimulus::finger(z), &p).unwrap();
        assert_eq!(at(15.0), 1.0);
        assert!((at(0.0) - 0.853).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn flat_profile_gives_identity() {
        let profile: Vec<_> = (0..=15).map(|z| (z as f64, 0.0)).collect();
        let fit = fit_proximity(&profile).unwrap();
        assert_eq!(fit.params.delta_contact, 0.0);
        for z in 0..=15 {
            let f = proximity_factor(&ProximityStimulus::finger(z as f64), &fit.params).unwrap();
            assert_eq!(f, 1.0);
        }
    }

    #[test]
    fn recovers_its_own_family() {
        let truth = ProximityParams {
            delta_contact: 0.13,
            shape: 4.2,
            ..ProximityParams::average()
        };
        let profile: Vec<_> = (0..=30)
            .map(|i| {
                let z = i as f64 * 0.5;
                (
                    z,
                    proximity_factor(&ProximityStimulus::finger(z), &truth).unwrap() - 1.0,
                )
            })
            .collect();
        let fit = fit_proximity(&profile).unwrap();
        assert!((fit.params.delta_contact - 0.13).abs() < 1e-12);
        assert!((fit.params.shape - 4.2).abs() < 1e-6, "{}", fit.params.shape);
    }

    #[test]
    fn plain_exponential_within_one_percent_rms() {
        // raw exponential decay with a 4 mm length scale, not normalized at 15 mm
        let generator = |z: f64| -0.147 * (-z / 4.0).exp();
        let profile: Vec<_> = (0..=60).map(|i| i as f64 * 0.25).map(|z| (z, generator(z))).collect();
        let fit = fit_proximity(&profile).unwrap();
        let reference = 1.0 + generator(15.0);
        let mut err = 0.0;
        let mut norm = 0.0;
        for &(z, v) in &profile {
            let model = (proximity_factor(&ProximityStimulus::finger(z), &fit.params).unwrap()) * reference - 1.0;
            err += (model - v).powi(2);
            norm += v.powi(2);
        }
        let rel = (err / norm).sqrt();
        assert!(rel <= 0.01, "relative RMS {rel}");
    }

    #[test]
    fn non_monotone_data_warns_and_still_fits() {
        let profile = [(0.0, -0.14), (3.0, -0.06), (6.0, -0.08), (15.0, 0.0)];
        let fit = fit_proximity(&profile).unwrap();
        assert_eq!(fit.warnings.len(), 1);
        let mut prev = 0.0;
        for i in 0..=150 {
            let f = proximity_factor(&ProximityStimulus::finger(i as f64 / 10.0), &fit.params).unwrap();
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn missing_endpoints_rejected() {
        assert!(fit_proximity(&[(0.0, -0.1), (5.0, 0.0)]).is_err());
        assert!(fit_proximity(&[(1.0, -0.1), (15.0, 0.0)]).is_err());
        assert!(fit_proximity(&[(-1.0, -0.1), (15.0, 0.0)]).is_err());
    }

    #[test]
    fn isotonic_pools_violations() {
        assert_eq!(isotonic_non_decreasing(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_non_decreasing(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }
}
