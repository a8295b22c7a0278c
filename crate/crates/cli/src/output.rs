//! Result tables and the single writer that persists them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use latentgraph::bench::AggregatedMetric;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| CliError::Config(format!("csv encoding: {e}"));
        w.write_record(&self.header).map_err(wrap)?;
        for row in &self.rows {
            w.write_record(row).map_err(wrap)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Groups per-run metric values under a key; `None` marks a failed run.
#[derive(Debug, Clone)]
pub struct Aggregator {
    key_names: Vec<String>,
    groups: BTreeMap<(Vec<String>, String), Vec<Option<f64>>>,
    order: Vec<(Vec<String>, String)>,
}

impl Aggregator {
    pub fn new(key_names: &[&str]) -> Self {
        Aggregator {
            key_names: key_names.iter().map(|s| s.to_string()).collect(),
            groups: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    pub fn record(&mut self, key: &[String], metric: &str, value: Option<f64>) {
        let k = (key.to_vec(), metric.to_string());
        if !self.groups.contains_key(&k) {
            self.order.push(k.clone());
        }
        self.groups.entry(k).or_default().push(value);
    }

    /// Rows appear in first-recorded order. Non-finite values count as
    /// failed runs.
    pub fn table(&self) -> CliResult<Table> {
        let mut header: Vec<&str> = self.key_names.iter().map(String::as_str).collect();
        header.extend(["metric", "mean", "ci95", "n_runs", "n_failed"]);
        let mut t = Table::new(&header);
        for k in &self.order {
            let values = &self.groups[k];
            let ok: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
            let n_failed = values.len() - ok.len();
            let (mean, ci) = if ok.is_empty() {
                ("NaN".to_string(), "NaN".to_string())
            } else {
                let agg = AggregatedMetric::from_runs(ok.clone())?;
                (fmt_f64(agg.mean), fmt_f64(agg.ci95_halfwidth))
            };
            let mut row = k.0.clone();
            row.extend([k.1.clone(), mean, ci, ok.len().to_string(), n_failed.to_string()]);
            t.push(row);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub task: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub run_seeds: Vec<u64>,
    pub wall_time_s: f64,
    pub artifact_version: String,
    pub workers: usize,
    pub n_runs: usize,
    pub n_failed: usize,
}

/// Everything a task produces; written in one pass after computation.
#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub runs: Table,
    pub aggregate: Table,
    pub run_seeds: Vec<u64>,
    pub n_failed: usize,
    /// Extra files as `(name, contents)`.
    pub extras: Vec<(String, String)>,
}

pub struct ResultWriter {
    dir: PathBuf,
}

impl ResultWriter {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(ResultWriter { dir: dir.to_path_buf() })
    }

    fn put(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    }

    pub fn write(&self, output: &TaskOutput, manifest: &Manifest) -> CliResult<()> {
        self.put("runs.csv", &output.runs.to_csv()?)?;
        self.put("aggregate.csv", &output.aggregate.to_csv()?)?;
        for (name, contents) in &output.extras {
            self.put(name, contents)?;
        }
        let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        self.put("manifest.json", &(json + "\n"))
    }
}
