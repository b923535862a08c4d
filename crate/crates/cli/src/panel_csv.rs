//! Panel CSV: a mandatory header with the thirteen columns below (any
//! order on input, this order on output), UTF-8, `.` decimals. Floats are
//! written with 17 significant digits so a read-write cycle is
//! byte-identical.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use subsidy_core::panel::{validate_panel, PanelRow};

use crate::error::{CliError, Result};

pub const COLUMNS: [&str; 13] = [
    "hcp_id",
    "period",
    "ln_price",
    "ln_subsidy",
    "ln_netcost",
    "s2",
    "s2c",
    "ln_speed",
    "hcp_type",
    "service_type",
    "state",
    "n_requests",
    "speed_mbps",
];

/// Scientific notation with 17 significant digits, enough to round-trip any f64.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_panel<W: Write>(rows: &[PanelRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let csv_err = |e: csv::Error| CliError::Serialize(e.to_string());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.hcp_id.clone(),
            r.period.to_string(),
            fmt_float(r.ln_price),
            fmt_float(r.ln_subsidy),
            fmt_float(r.ln_netcost),
            fmt_float(r.s2),
            fmt_float(r.s2c),
            fmt_float(r.ln_speed),
            r.hcp_type.clone(),
            r.service_type.clone(),
            r.state.clone(),
            r.n_requests.to_string(),
            fmt_float(r.speed_mbps),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Serialize(e.to_string()))
}

pub fn panel_to_bytes(rows: &[PanelRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_panel(rows, &mut buf)?;
    Ok(buf)
}

pub fn read_panel_file(path: &Path) -> Result<Vec<PanelRow>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_panel(file)
}

/// Parses and validates a panel. Row numbers in errors count data rows
/// from 1.
pub fn read_panel<R: Read>(input: R) -> Result<Vec<PanelRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| csv_schema(&e))?.clone();
    if header.iter().all(|h| h.is_empty()) {
        return Err(CliError::schema(None, None, "missing header row"));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        let Some(&name) = COLUMNS.iter().find(|c| **c == h) else {
            return Err(CliError::schema(None, Some(h), "unknown column"));
        };
        if index.insert(name, i).is_some() {
            return Err(CliError::schema(None, Some(h), "duplicate column"));
        }
    }
    if let Some(missing) = COLUMNS.iter().find(|c| !index.contains_key(**c)) {
        return Err(CliError::schema(None, Some(missing), "required column absent"));
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_schema(&e))?;
        let cell = |name: &'static str| -> Result<&str> {
            let v = rec.get(index[name]).unwrap_or("");
            if v.trim().is_empty() {
                Err(CliError::schema(Some(row), Some(name), "missing value"))
            } else {
                Ok(v)
            }
        };
        let float = |name: &'static str| -> Result<f64> {
            let raw = cell(name)?;
            match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::schema(Some(row), Some(name), format!("not a finite number: {raw:?}"))),
            }
        };
        let period = match cell("period")?.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(CliError::schema(Some(row), Some("period"), format!("must be 0 or 1, got {other:?}"))),
        };
        let n_requests = match cell("n_requests")?.trim().parse::<u32>() {
            Ok(v) if v > 0 => v,
            _ => return Err(CliError::schema(Some(row), Some("n_requests"), "must be a positive integer")),
        };
        let share = |name: &'static str| -> Result<f64> {
            let v = float(name)?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(CliError::schema(Some(row), Some(name), format!("share {v} outside [0, 1]")))
            }
        };
        let (s2, s2c) = (share("s2")?, share("s2c")?);
        if s2 + s2c > 1.0 + 1e-12 {
            return Err(CliError::schema(Some(row), Some("s2c"), format!("s2 + s2c = {} exceeds 1", s2 + s2c)));
        }
        let speed_mbps = float("speed_mbps")?;
        if speed_mbps <= 0.0 {
            return Err(CliError::schema(Some(row), Some("speed_mbps"), "must be positive"));
        }
        rows.push(PanelRow {
            hcp_id: cell("hcp_id")?.to_string(),
            period,
            ln_price: float("ln_price")?,
            ln_subsidy: float("ln_subsidy")?,
            ln_netcost: float("ln_netcost")?,
            s2,
            s2c,
            ln_speed: float("ln_speed")?,
            hcp_type: cell("hcp_type")?.to_string(),
            service_type: cell("service_type")?.to_string(),
            state: cell("state")?.to_string(),
            n_requests,
            speed_mbps,
            level_sums: None,
        });
    }
    if rows.is_empty() {
        return Err(CliError::schema(None, None, "panel has no data rows"));
    }
    let mut seen = HashSet::new();
    for (i, r) in rows.iter().enumerate() {
        if !seen.insert((r.hcp_id.as_str(), r.period)) {
            return Err(CliError::schema(
                Some(i + 1),
                Some("hcp_id"),
                format!("duplicate ({}, {}) row", r.hcp_id, r.period),
            ));
        }
    }
    validate_panel(&rows).map_err(|e| match CliError::from(e) {
        // Core reports 0-based indices.
        CliError::SchemaViolation { row: Some(r), column, message } => {
            CliError::SchemaViolation { row: Some(r + 1), column, message }
        }
        other => other,
    })?;
    Ok(rows)
}

fn csv_schema(e: &csv::Error) -> CliError {
    // Line 1 is the header, so data row = line - 1.
    let row = e.position().map(|p| (p.line() as usize).saturating_sub(1));
    CliError::schema(row, None, e.to_string())
}
