//! Plain-text parameter files, one `key = value unit` per line.
//!
//! ```text
//! # taxel parameters
//! geometry.d = 1.5 mm
//! material.e1 = 35.714285714285715 kPa
//! parasitics.shielded = false
//! ```
//!
//! Every key is required, units must match exactly, `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::CalibrationError;
use crate::physics::TaxelModel;

type Get = fn(&TaxelModel) -> f64;
type Set = fn(&mut TaxelModel, f64);

struct Field {
    key: &'static str,
    unit: &'static str,
    get: Get,
    set: Set,
}

macro_rules! field {
    ($key:literal, $unit:literal, $($path:ident).+) => {
        Field {
            key: $key,
            unit: $unit,
            get: |m| m.$($path).+,
            set: |m, v| m.$($path).+ = v,
        }
    };
    ($key:literal, $unit:literal, $($path:ident).+ [$i:literal]) => {
        Field {
            key: $key,
            unit: $unit,
            get: |m| m.$($path).+[$i],
            set: |m, v| m.$($path).+[$i] = v,
        }
    };
}

const SHIELDED_KEY: &str = "parasitics.shielded";

const FIELDS: &[Field] = &[
    field!("geometry.d", "mm", geometry.d_mm),
    field!("geometry.l", "mm", geometry.l_mm),
    field!("geometry.w", "mm", geometry.w_mm),
    field!("geometry.eps_w", "pF", geometry.eps_w_pf),
    field!("material.e1", "kPa", material.normal.e1_kpa),
    field!("material.e2", "kPa", material.normal.e2_kpa),
    field!("material.strain_break", "1", material.normal.strain_break),
    field!("material.max_strain", "1", material.normal.max_strain),
    field!("material.shear_compliance", "mm/N", material.shear.compliance_mm_per_n),
    field!(
        "material.shear_max_displacement",
        "mm",
        material.shear.max_displacement_mm
    ),
    field!("material.damping", "kPa*s", material.damping_kpa_s),
    field!("parasitics.c1", "pF", parasitics.offsets_pf[0]),
    field!("parasitics.c2", "pF", parasitics.offsets_pf[1]),
    field!("parasitics.c3", "pF", parasitics.offsets_pf[2]),
    field!("parasitics.c4", "pF", parasitics.offsets_pf[3]),
    field!("crosstalk.xy_coupling", "1", crosstalk.xy_coupling),
    field!("proximity.z_max", "mm", proximity.z_max_mm),
    field!("proximity.delta_contact", "1", proximity.delta_contact),
    field!("proximity.shape", "1", proximity.shape),
    field!("proximity.insulator_rise", "1", proximity.insulator_rise),
    field!("proximity.insulator_contact", "mm", proximity.insulator_contact_mm),
    field!("self_cap.baseline", "pF", self_cap.baseline_pf),
    field!("self_cap.delta_contact", "pF", self_cap.delta_contact_pf),
    field!("self_cap.z_max", "mm", self_cap.z_max_mm),
    field!("self_cap.shape", "1", self_cap.shape),
];

/// Renders every parameter. Floats use the shortest representation that
/// parses back to the same bits.
pub fn render_params(model: &TaxelModel) -> String {
    let mut out = String::from("# taxel parameters\n");
    for f in FIELDS {
        let _ = writeln!(out, "{} = {} {}", f.key, (f.get)(model), f.unit);
    }
    let _ = writeln!(out, "{SHIELDED_KEY} = {}", model.parasitics.shielded);
    out
}

pub fn parse_params(text: &str) -> Result<TaxelModel, CalibrationError> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut model = TaxelModel::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: String| CalibrationError::Parse { line, msg };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, rest) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value unit`, got {content:?}")))?;
        let key = key.trim();
        let mut parts = rest.split_whitespace();
        let value = parts.next().ok_or_else(|| err(format!("{key}: missing value")))?;
        let unit = parts.next();
        if parts.next().is_some() {
            return Err(err(format!("{key}: trailing text after unit")));
        }

        if key == SHIELDED_KEY {
            if unit.is_some() {
                return Err(err(format!("{key}: takes no unit")));
            }
            model.parasitics.shielded = value
                .parse()
                .map_err(|_| err(format!("{key}: expected true or false, got {value:?}")))?;
        } else {
            let field = FIELDS
                .iter()
                .find(|f| f.key == key)
                .ok_or_else(|| err(format!("unknown key {key:?}")))?;
            match unit {
                Some(u) if u == field.unit => {}
                Some(u) => {
                    return Err(err(format!("{key}: unit {u:?}, expected {:?}", field.unit)));
                }
                None => return Err(err(format!("{key}: missing unit {:?}", field.unit))),
            }
            let v: f64 = value
                .parse()
                .map_err(|_| err(format!("{key}: invalid number {value:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("{key}: value must be finite")));
            }
            (field.set)(&mut model, v);
        }
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(err(format!("{key} already set on line {first}")));
        }
    }
    let missing: Vec<&str> = FIELDS
        .iter()
        .map(|f| f.key)
        .chain(std::iter::once(SHIELDED_KEY))
        .filter(|k| !seen.contains_key(*k))
        .collect();
    if !missing.is_empty() {
        return Err(CalibrationError::Parse {
            line: text.lines().count(),
            msg: format!("missing keys: {}", missing.join(", ")),
        });
    }
    model.validate()?;
    Ok(model)
}

pub fn read_params(path: &Path) -> Result<TaxelModel, CalibrationError> {
    parse_params(&std::fs::read_to_string(path)?)
}

pub fn write_params(path: &Path, model: &TaxelModel) -> Result<(), CalibrationError> {
    std::fs::write(path, render_params(model))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{CrosstalkModel, ParasiticModel};

    #[test]
    fn round_trip_is_exact() {
        let mut model = TaxelModel::default();
        model.parasitics = ParasiticModel::unshielded(model.geometry.c0_pf()).unwrap();
        model.crosstalk = CrosstalkModel::shielded_prototype();
        let text = render_params(&model);
        assert_eq!(parse_params(&text).unwrap(), model);
    }

    #[test]
    fn unit_mismatch_names_the_line() {
        let text = render_params(&TaxelModel::default()).replace("geometry.d = 1.5 mm", "geometry.d = 1.5 cm");
        match parse_params(&text) {
            Err(CalibrationError::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("cm"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_duplicate_and_missing_keys() {
        let base = render_params(&TaxelModel::default());
        assert!(parse_params(&format!("{base}bogus = 1 mm\n")).is_err());
        assert!(parse_params(&format!("{base}geometry.d = 1.5 mm\n")).is_err());
        let without: String = base
            .lines()
            .filter(|l| !l.starts_with("self_cap.shape"))
            .map(|l| format!("{l}\n"))
            .collect();
        let e = parse_params(&without).unwrap_err().to_string();
        assert!(e.contains("self_cap.shape"), "{e}");
    }

    #[test]
    fn invalid_model_rejected() {
        let text = render_params(&TaxelModel::default()).replace("geometry.d = 1.5 mm", "geometry.d = -1 mm");
        assert!(parse_params(&text).is_err());
    }
}
