//! Comma-separated datasets: header row, one sample per line, targets last.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// How to interpret the trailing columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvSchema {
    /// Last column is an integer class label; class count is `max + 1`
    /// unless given.
    Classification { num_classes: Option<usize> },
    /// Last `targets` columns are regression values.
    Regression { targets: usize },
}

fn parse_cell(cell: &str, line: usize, col: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {}: `{cell}` is not a number", col + 1),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {}: non-finite value", col + 1),
        });
    }
    Ok(v)
}

/// Read a dataset. Line numbers in errors are 1-based and count the header.
pub fn load_csv(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
    let width = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .len();
    let n_targets = match schema {
        CsvSchema::Classification { .. } => 1,
        CsvSchema::Regression { targets } => targets,
    };
    if n_targets == 0 || width <= n_targets {
        return Err(Error::Parse {
            line: 1,
            message: format!("{width} columns leave no features for {n_targets} target column(s)"),
        });
    }
    let d = width - n_targets;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v = parse_cell(cell, line, c)?;
            if c < d {
                x.push(v);
            } else if let CsvSchema::Classification { .. } = schema {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("label `{cell}` is not a nonnegative integer"),
                    });
                }
                labels.push(v as usize);
            } else {
                y.push(v);
            }
        }
    }
    let rows = x.len() / d;
    let x = Matrix::from_vec(rows, d, x)?;
    let targets = match schema {
        CsvSchema::Classification { num_classes } => {
            let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
            Targets::Classes { labels, num_classes: k }
        }
        CsvSchema::Regression { targets } => Targets::Values(Matrix::from_vec(rows, targets, y)?),
    };
    Dataset::new(x, targets)
}

/// Write a dataset with header `x0..x{d-1}` then `label` or `y0..`.
/// Floats use the shortest representation that parses back exactly.
pub fn save_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..data.input_dim()).map(|i| format!("x{i}")).collect();
    match &data.targets {
        Targets::Classes { .. } => header.push("label".into()),
        Targets::Values(y) => header.extend((0..y.cols()).map(|i| format!("y{i}"))),
    }
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.x.row(i).iter().map(|v| v.to_string()).collect();
        match &data.targets {
            Targets::Classes { labels, .. } => row.push(labels[i].to_string()),
            Targets::Values(y) => row.extend(y.row(i).iter().map(|v| v.to_string())),
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}
