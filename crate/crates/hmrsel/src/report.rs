//! CSV tables and JSON documents written by the CLI.

use std::fs;
use std::path::Path;

use hmrsel_core::stats::ComparisonReport;
use hmrsel_core::ObjectiveVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::malformed(path, e.to_string()))
}

/// One `threshold` column followed by one column per named curve.
pub fn write_curves(path: &Path, grid: &[f64], curves: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["threshold".to_string()];
    header.extend(curves.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (k, t) in grid.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(curves.iter().map(|(_, v)| v[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub label: String,
    pub coverage: f64,
    pub similarity: f64,
    pub kill_ratio: f64,
    pub feasible: bool,
}

impl ObjectiveRow {
    pub fn new(label: impl Into<String>, o: &ObjectiveVector) -> Self {
        Self {
            label: label.into(),
            coverage: o.coverage,
            similarity: o.similarity,
            kill_ratio: o.kill_ratio,
            feasible: o.feasible,
        }
    }

    pub fn objectives(&self) -> ObjectiveVector {
        ObjectiveVector {
            coverage: self.coverage,
            similarity: self.similarity,
            kill_ratio: self.kill_ratio,
            feasible: self.feasible,
        }
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_objectives(path: &Path) -> Result<Vec<ObjectiveVector>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<ObjectiveRow>()
        .map(|row| {
            row.map(|r| r.objectives())
                .map_err(|e| HarnessError::malformed(path, e.to_string()))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct ComparisonRow<'a> {
    criterion: &'a str,
    optimized_mean: f64,
    optimized_sd: f64,
    random_mean: f64,
    random_sd: f64,
    alternative: &'a str,
    u: f64,
    p: f64,
    delta: f64,
    magnitude: &'a str,
}

pub fn write_comparison(path: &Path, report: &ComparisonReport) -> Result<()> {
    let rows: Vec<ComparisonRow> = report
        .criteria
        .iter()
        .map(|c| ComparisonRow {
            criterion: c.criterion.name(),
            optimized_mean: c.optimized_mean,
            optimized_sd: c.optimized_sd,
            random_mean: c.random_mean,
            random_sd: c.random_sd,
            alternative: match c.alternative {
                hmrsel_core::stats::Alternative::Greater => "greater",
                hmrsel_core::stats::Alternative::Less => "less",
                hmrsel_core::stats::Alternative::TwoSided => "two-sided",
            },
            u: c.u,
            p: c.p,
            delta: c.delta,
            magnitude: c.magnitude.name(),
        })
        .collect();
    write_rows(path, &rows)
}
