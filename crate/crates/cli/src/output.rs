//! History CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dampflow_core::EnergySample;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: missing column {column}")]
    MissingColumn { path: String, column: String },
    #[error("{path}, row {row}: cannot parse {value:?} as a number")]
    BadNumber { path: String, row: usize, value: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_history(path: &Path, samples: &[EnergySample]) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(EnergySample::CSV_HEADER).map_err(csv_err)?;
    for s in samples {
        w.write_record(s.to_record().iter().map(|x| fmt_f64(*x))).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a history written by [`write_history`]. Columns are matched by
/// name; a missing `ut_sq_integral` column reads as zero.
pub fn read_history(path: &Path) -> Result<Vec<EnergySample>, OutputError> {
    let name = path.display().to_string();
    let csv_err = |source| OutputError::Csv { path: name.clone(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let mut index = [None; 12];
    for (k, col) in EnergySample::CSV_HEADER.iter().enumerate() {
        index[k] = headers.iter().position(|h| h.trim() == *col);
        if index[k].is_none() && *col != "ut_sq_integral" {
            return Err(OutputError::MissingColumn { path: name, column: col.to_string() });
        }
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut values = [0.0; 12];
        for (k, idx) in index.iter().enumerate() {
            let Some(i) = idx else { continue };
            let text = rec.get(*i).unwrap_or("").trim();
            values[k] = text.parse().map_err(|_| OutputError::BadNumber {
                path: name.clone(),
                row: row + 1,
                value: text.to_string(),
            })?;
        }
        out.push(EnergySample::from_record(&values));
    }
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), OutputError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|source| OutputError::Json { path: path.display().to_string(), source })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, OutputError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| OutputError::Json { path: path.display().to_string(), source })
}
