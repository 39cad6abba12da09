//! Experiment output: `report.csv` (one row per estimator run, deterministic),
//! `summary.json`, `timings.csv` (wall clock, not deterministic), extra
//! tables, and plots with their data.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliResult;
use crate::plot::Plot;

/// One estimator run. `grid` is N, the subsample size, or a case index
/// depending on the experiment; `set` indexes parameter sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub estimator: String,
    pub set: usize,
    pub grid: usize,
    pub rep: usize,
    pub seed: u64,
    /// Regularization weight or margin the estimator ran with.
    pub hyper: Option<f64>,
    /// ‖β̂ − β*‖₂².
    pub mse: Option<f64>,
    /// Beat the baseline in this replication (robust estimators only).
    pub win: Option<bool>,
    pub objective_gap: Option<f64>,
    pub loglik: Option<f64>,
    pub kkt: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl Row {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub estimator: String,
    pub set: usize,
    pub grid: usize,
    pub rep: usize,
    pub seconds: f64,
}

/// Extra CSV written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub config_echo: Value,
    pub metadata: Map<String, Value>,
    pub rows: Vec<Row>,
    pub summary: Value,
    pub timings: Vec<Timing>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
}

impl ExperimentReport {
    /// `summary.json` contents.
    pub fn summary_document(&self) -> Value {
        serde_json::json!({
            "experiment_id": self.experiment_id,
            "config": self.config_echo,
            "metadata": self.metadata,
            "summary": self.summary,
        })
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir)?;
        write_rows(&self.rows, &dir.join("report.csv"))?;
        let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
        for t in &self.timings {
            w.serialize(t)?;
        }
        w.flush()?;
        let doc = serde_json::to_string_pretty(&self.summary_document())?;
        fs::write(dir.join("summary.json"), doc + "\n")?;
        for t in &self.tables {
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
            w.write_record(&t.header)?;
            for r in &t.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        for p in &self.plots {
            fs::write(dir.join(format!("{}.svg", p.name)), p.to_svg())?;
            fs::write(dir.join(format!("{}.csv", p.name)), p.to_csv())?;
        }
        Ok(())
    }
}

pub fn write_rows(rows: &[Row], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> CliResult<Vec<Row>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<Row>, _>>()?;
    Ok(rows)
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
