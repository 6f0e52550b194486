use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::RunReport;
use super::HarnessError;

pub const CSV_HEADER: [&str; 14] = [
    "t",
    "C1",
    "C2",
    "C3",
    "C4",
    "self_cap",
    "normal_strain",
    "shear_x",
    "shear_y",
    "shear_mag",
    "shear_angle",
    "pressure_kPa",
    "shear_N",
    "class",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// CSV text of the decoded timeline, one row per step. `self_cap` is empty
/// when no self reading is available.
pub fn to_csv(report: &RunReport) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for s in &report.steps {
        let c = s.frame.mutual_values().copied().unwrap_or([f64::NAN; 4]);
        let d = &s.decoded;
        let mut row: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
        row.push(s.t.to_string());
        row.extend(c.iter().map(f64::to_string));
        row.push(s.self_cap_pf.map(|v| v.to_string()).unwrap_or_default());
        for v in [
            d.normal_strain,
            d.shear_x_mm,
            d.shear_y_mm,
            d.shear_magnitude_mm,
            d.shear_angle_deg,
            d.pressure_kpa,
            d.shear_force_n,
        ] {
            row.push(v.to_string());
        }
        row.push(d.stimulus.to_string());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn to_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn from_json(text: &str) -> Result<RunReport, HarnessError> {
    Ok(serde_json::from_str(text)?)
}

/// Writes the report. The file is produced in one write, so a failure never
/// leaves a truncated export behind that looks complete.
pub fn export(report: &RunReport, format: ExportFormat, path: &Path) -> Result<(), HarnessError> {
    let text = match format {
        ExportFormat::Csv => to_csv(report)?,
        ExportFormat::Json => to_json(report) + "\n",
    };
    std::fs::write(path, text)?;
    Ok(())
}

pub fn import_json(path: &Path) -> Result<RunReport, HarnessError> {
    from_json(&std::fs::read_to_string(path)?)
}
