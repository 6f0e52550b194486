//! CSV inputs for the fits.
//!
//! Stress-strain: `strain,stress_kpa` with optional `branch` (`loading` or
//! `unloading`), `t_s` and `record` (integer id grouping samples into runs).
//! Proximity: `z_mm,dc_over_c0` with ΔC/C0 as a fraction.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Deserialize;

use super::fit::{Branch, StressStrainRecord, StressStrainSample};
use super::CalibrationError;

#[derive(Deserialize)]
struct StressStrainRow {
    strain: f64,
    stress_kpa: f64,
    #[serde(default)]
    branch: Option<Branch>,
    #[serde(default)]
    t_s: Option<f64>,
    #[serde(default)]
    record: Option<u32>,
}

#[derive(Deserialize)]
struct ProximityRow {
    z_mm: f64,
    dc_over_c0: f64,
}

fn csv_error(e: csv::Error) -> CalibrationError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    CalibrationError::Parse {
        line,
        msg: e.to_string(),
    }
}

pub fn read_stress_strain_csv(reader: impl Read) -> Result<Vec<StressStrainRecord>, CalibrationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records: BTreeMap<u32, StressStrainRecord> = BTreeMap::new();
    for row in rdr.deserialize::<StressStrainRow>() {
        let row = row.map_err(csv_error)?;
        records
            .entry(row.record.unwrap_or(0))
            .or_default()
            .samples
            .push(StressStrainSample {
                t_s: row.t_s,
                strain: row.strain,
                stress_kpa: row.stress_kpa,
                branch: row.branch.unwrap_or(Branch::Loading),
            });
    }
    Ok(records.into_values().collect())
}

pub fn read_proximity_csv(reader: impl Read) -> Result<Vec<(f64, f64)>, CalibrationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<ProximityRow>()
        .map(|r| r.map(|r| (r.z_mm, r.dc_over_c0)).map_err(csv_error))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stress_strain_groups_by_record() {
        let text = "strain,stress_kpa,record,branch\n0.1,5,0,loading\n0.2,10,1,\n0.1,4,0,unloading\n";
        let recs = read_stress_strain_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].samples.len(), 2);
        assert_eq!(recs[0].samples[1].branch, Branch::Unloading);
        assert_eq!(recs[1].samples[0].branch, Branch::Loading);
    }

    #[test]
    fn minimal_columns_and_errors() {
        let recs = read_stress_strain_csv("strain,stress_kpa\n0.1,3.5\n".as_bytes()).unwrap();
        assert_eq!(recs[0].samples[0].stress_kpa, 3.5);
        let e = read_stress_strain_csv("strain,stress_kpa\n0.1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(e, CalibrationError::Parse { line: 2, .. }), "{e:?}");
        let p = read_proximity_csv("z_mm,dc_over_c0\n15,0\n0,-0.147\n".as_bytes()).unwrap();
        assert_eq!(p, vec![(15.0, 0.0), (0.0, -0.147)]);
    }
}
