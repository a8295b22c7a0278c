//! `(x, y, series)` tables for external plotting.

use std::collections::BTreeMap;
use std::path::Path;

use latentgraph::filters::SpectralResponseFilter;

use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, Table};

/// Sampled response on `[0, lambda_max]`, endpoints included.
pub fn filter_response(filters: &[SpectralResponseFilter], lambda_max: f64, step: f64) -> CliResult<Table> {
    if filters.is_empty() {
        return Err(CliError::Config("filter_response needs at least one --filter".into()));
    }
    if !(step > 0.0 && lambda_max > 0.0) {
        return Err(CliError::Config("--step and --lambda-max must be positive".into()));
    }
    let count = (lambda_max / step).round() as usize;
    let mut t = Table::new(&["x", "y", "series"]);
    for f in filters {
        for i in 0..=count {
            let x = lambda_max * i as f64 / count.max(1) as f64;
            let y = f.response(x, lambda_max)?;
            t.push(vec![fmt_f64(x), fmt_f64(y), f.to_string()]);
        }
    }
    Ok(t)
}

struct Runs {
    path: std::path::PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Runs {
    fn column(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::schema(&self.path, Some(1), format!("missing column `{name}`")))
    }
}

/// Loads `runs.csv` from a results directory, keeping only successful rows.
fn load_runs(dir: &Path) -> CliResult<Runs> {
    let path = dir.join("runs.csv");
    if !path.is_file() {
        return Err(CliError::Config(format!("empty input: no runs.csv in {}", dir.display())));
    }
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| CliError::schema(&path, None, e.to_string()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::schema(&path, Some(1), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::schema(&path, e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect::<Vec<_>>()));
    }
    let mut runs = Runs { path, header, rows };
    if let Ok(s) = runs.column("status") {
        runs.rows.retain(|(_, r)| r[s] == "ok");
    }
    if runs.rows.is_empty() {
        return Err(CliError::Config(format!("empty input: {} has no successful runs", runs.path.display())));
    }
    Ok(runs)
}

fn number(runs: &Runs, line: u64, value: &str, column: &str) -> CliResult<f64> {
    value
        .parse()
        .map_err(|_| CliError::schema(&runs.path, Some(line), format!("column `{column}`: `{value}` is not a number")))
}

fn mean_table(groups: BTreeMap<(String, u64, String), Vec<f64>>) -> Table {
    let mut t = Table::new(&["x", "y", "series"]);
    for ((series, _, x), ys) in groups {
        let y = ys.iter().sum::<f64>() / ys.len() as f64;
        t.push(vec![x, fmt_f64(y), series]);
    }
    t
}

/// Mean mAP per `m` from a retrieval result, one series per
/// channel set and smoothing side.
pub fn ablation(dir: &Path) -> CliResult<Table> {
    let runs = load_runs(dir)?;
    let (cm, cy) = (runs.column("m")?, runs.column("map")?);
    let (cc, cs) = (runs.column("channels")?, runs.column("smooth")?);
    let mut groups: BTreeMap<(String, u64, String), Vec<f64>> = BTreeMap::new();
    for (line, r) in &runs.rows {
        let m = number(&runs, *line, &r[cm], "m")? as u64;
        let y = number(&runs, *line, &r[cy], "map")?;
        groups
            .entry((format!("{}/{}", r[cc], r[cs]), m, r[cm].clone()))
            .or_default()
            .push(y);
    }
    Ok(mean_table(groups))
}

/// σ per layer from a latent-gap result: one series per seed and their
/// mean.
pub fn smoothness_curve(dir: &Path) -> CliResult<Table> {
    let runs = load_runs(dir)?;
    let (cl, cy, cs) = (runs.column("layer_index")?, runs.column("sigma")?, runs.column("seed_index")?);
    let mut groups: BTreeMap<(String, u64, String), Vec<f64>> = BTreeMap::new();
    for (line, r) in &runs.rows {
        let layer = number(&runs, *line, &r[cl], "layer_index")? as u64;
        let y = number(&runs, *line, &r[cy], "sigma")?;
        groups
            .entry((format!("seed_{}", r[cs]), layer, r[cl].clone()))
            .or_default()
            .push(y);
        groups.entry(("mean".into(), layer, r[cl].clone())).or_default().push(y);
    }
    Ok(mean_table(groups))
}
