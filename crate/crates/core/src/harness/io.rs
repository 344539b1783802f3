use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::{RunConfig, TrajectoryRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["k", "grad_norm", "f_value", "agg_error", "step_size"];

/// 17 significant digits in scientific notation; parses back to the same bits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses a JSON file; syntax and schema errors name the line and column.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        // serde_json appends " at line L column C" to its message.
        let msg = e.to_string();
        let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
        Error::Config(format!(
            "{}:{}:{}: {msg}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let config: RunConfig = load_json(path)?;
    config
        .validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(config)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            format_float(r.grad_norm),
            format_float(r.f_value),
            format_float(r.agg_error),
            format_float(r.step_size),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One line of a trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub k: usize,
    pub grad_norm: f64,
    pub f_value: f64,
    pub agg_error: f64,
    pub step_size: f64,
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(String::from)
        .collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// Whitespace-separated columns with a `#` header line, as gnuplot reads them.
pub fn write_dat(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(out, "# {}", columns.join(" "))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_trajectory_dat(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let rows: Vec<Vec<f64>> = records
        .iter()
        .map(|r| vec![r.k as f64, r.grad_norm, r.f_value, r.agg_error, r.step_size])
        .collect();
    write_dat(path, &CSV_HEADER, &rows)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}
