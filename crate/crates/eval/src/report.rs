//! Metric reports and the trace files they point to.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tendonsim_core::datagen::sha256_hex;
use tendonsim_core::fsutil::write_atomic;
use tendonsim_core::metrics::{rmse, rmse_two_pass, std_abs_error};

use crate::error::{EvalError, Result};

/// Error statistics of one (subject, condition) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    /// What produced the prediction: a model name, "ideal", or a policy source.
    pub subject: String,
    /// System, blocking mode, schedule phase, and so on.
    pub condition: String,
    pub rmse: f64,
    pub std_abs_error: f64,
    pub samples: usize,
    /// File name of the trace under the experiment directory.
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub experiment: String,
    /// Unit of every rmse in `conditions`: "N" or "mm".
    pub unit: String,
    pub conditions: Vec<ConditionMetrics>,
    /// Derived scalars (means, ratios, lags), keyed by name.
    pub summary: BTreeMap<String, f64>,
    /// sha256 of every model, dataset, or config the numbers depend on.
    pub hashes: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn new(experiment: &str, unit: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            unit: unit.to_string(),
            conditions: Vec::new(),
            summary: BTreeMap::new(),
            hashes: BTreeMap::new(),
        }
    }

    pub fn find(&self, subject: &str, condition: &str) -> Option<&ConditionMetrics> {
        self.conditions
            .iter()
            .find(|c| c.subject == subject && c.condition == condition)
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }
}

/// Column-oriented numeric trace written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory csv");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricReport,
    pub traces: Vec<Trace>,
}

impl ExperimentOutput {
    /// Writes `summary.json` and one CSV per trace into `dir`, each atomically.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::Output {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut written = Vec::new();
        for trace in &self.traces {
            let path = dir.join(trace.file_name());
            write_atomic(&path, &trace.to_csv())?;
            written.push(path);
        }
        let path = dir.join("summary.json");
        let mut json = serde_json::to_vec_pretty(&self.report).map_err(|e| EvalError::Output {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        json.push(b'\n');
        write_atomic(&path, &json)?;
        written.push(path);
        Ok(written)
    }
}

/// Metrics of `pred` against `truth`, cross-checked against the two-pass
/// reference RMSE.
pub fn condition_metrics(subject: &str, condition: &str, pred: &[f64], truth: &[f64], trace: &str) -> Result<ConditionMetrics> {
    let fast = rmse(pred, truth);
    let reference = rmse_two_pass(pred, truth);
    if (fast - reference).abs() > 1e-9 * (1.0 + reference) {
        return Err(EvalError::MetricMismatch {
            trace: trace.to_string(),
            fast,
            reference,
        });
    }
    Ok(ConditionMetrics {
        subject: subject.to_string(),
        condition: condition.to_string(),
        rmse: fast,
        std_abs_error: std_abs_error(pred, truth),
        samples: pred.len(),
        trace: trace.to_string(),
    })
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    sha256_hex(bytes)
}
