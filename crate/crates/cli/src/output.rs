//! CSV and JSON emission.

use std::io::Write;
use std::path::Path;

use mcie_core::inference::study::BandRun;
use serde::Serialize;

use crate::CliError;

pub fn write(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("cannot write stdout: {e}"))),
    }
}

pub fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Columns `point_index, coord_0.., mc_value, det_value, halfwidth`.
pub fn band_csv(run: &BandRun) -> Result<String, CliError> {
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let dim = run.points.dim();
    let mut header = vec!["point_index".to_string()];
    header.extend((0..dim).map(|d| format!("coord_{d}")));
    header.extend(["mc_value", "det_value", "halfwidth"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for (i, p) in run.points.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.iter().map(f64::to_string));
        row.push(run.mc_values[i].to_string());
        row.push(run.det_values[i].to_string());
        row.push(run.band.halfwidth.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}
