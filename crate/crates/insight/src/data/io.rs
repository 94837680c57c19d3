//! Dataset file format.
//!
//! UTF-8 text: a `#`-prefixed header line carrying a JSON metadata
//! object (schema snapshot, technology, seed, row count), then a
//! `x_1,...,x_N,y_1,...,y_M` column header, then one CSV row per
//! design with 17 significant digits so every f64 round-trips exactly.
//! Any further `#` lines are comments and are ignored, so tools may
//! annotate files (provenance, notes) without breaking readers.

use super::{DataError, Dataset};
use crate::circuits::CircuitTopology;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct Header {
    topology: CircuitTopology,
    technology: String,
    seed: u64,
    rows: usize,
}

/// Serializes a dataset to its text form.
pub fn render_dataset(ds: &Dataset) -> String {
    let header = Header {
        topology: ds.topology.clone(),
        technology: ds.technology.clone(),
        seed: ds.seed,
        rows: ds.len(),
    };
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');

    let n = ds.topology.n_params();
    let m = ds.topology.n_metrics();
    let columns: Vec<String> = (1..=n)
        .map(|i| format!("x_{i}"))
        .chain((1..=m).map(|i| format!("y_{i}")))
        .collect();
    out.push_str(&columns.join(","));
    out.push('\n');

    for (design, metrics) in ds.designs.iter().zip(&ds.metrics) {
        let mut first = true;
        for v in design.iter().chain(metrics) {
            if !first {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("write to string");
            first = false;
        }
        out.push('\n');
    }
    out
}

/// Parses the text form back into a dataset.
pub fn parse_dataset(text: &str) -> Result<Dataset, DataError> {
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| DataError::Format("empty file".into()))?;
    let json = header_line
        .strip_prefix("# ")
        .or_else(|| header_line.strip_prefix('#'))
        .ok_or_else(|| DataError::Format("missing '#' metadata header".into()))?;
    let header: Header =
        serde_json::from_str(json).map_err(|e| DataError::Format(format!("metadata: {e}")))?;

    let n = header.topology.n_params();
    let m = header.topology.n_metrics();
    let column_line = loop {
        match lines.next() {
            Some(line) if line.starts_with('#') => continue,
            Some(line) => break line,
            None => return Err(DataError::Format("missing column header".into())),
        }
    };
    let got_cols = column_line.split(',').count();
    if got_cols != n + m {
        return Err(DataError::Format(format!(
            "expected {} columns, header has {got_cols}",
            n + m
        )));
    }

    let mut designs = Vec::with_capacity(header.rows);
    let mut metrics = Vec::with_capacity(header.rows);
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut values = Vec::with_capacity(n + m);
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| DataError::Format(format!("row {}: {e}", lineno + 3)))?;
            if !v.is_finite() {
                return Err(DataError::Format(format!(
                    "row {}: non-finite value {v}",
                    lineno + 3
                )));
            }
            values.push(v);
        }
        if values.len() != n + m {
            return Err(DataError::Format(format!(
                "row {}: expected {} fields, got {}",
                lineno + 3,
                n + m,
                values.len()
            )));
        }
        let metric_part = values.split_off(n);
        designs.push(values);
        metrics.push(metric_part);
    }
    if designs.len() != header.rows {
        return Err(DataError::Format(format!(
            "metadata says {} rows, file has {}",
            header.rows,
            designs.len()
        )));
    }

    Ok(Dataset {
        topology: header.topology,
        technology: header.technology,
        seed: header.seed,
        designs,
        metrics,
    })
}

/// Writes a dataset file.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    Ok(std::fs::write(path, render_dataset(ds))?)
}

/// Reads a dataset file.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}
