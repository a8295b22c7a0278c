//! Dataset ingestion, experiment orchestration and result persistence for
//! the `latentgraph` command line.

pub mod config;
pub mod dataset;
pub mod error;
pub mod output;
pub mod plotdata;
pub mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use config::{ExperimentConfig, TaskName};
use dataset::{ingest, IngestOptions};
use error::{CliError, CliResult};
use output::{Manifest, ResultWriter};

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub n_runs: usize,
    pub n_failed: usize,
}

/// Loads, validates and runs one experiment, then writes `runs.csv`,
/// `aggregate.csv`, `manifest.json` and any task extras under the output
/// directory. Per-run failures do not make this return an error.
pub fn run_experiment(task: TaskName, config_path: &Path, overrides: &Overrides) -> CliResult<RunSummary> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load(config_path)?;
    if cfg.task != task {
        return Err(CliError::Config(format!(
            "{} declares task `{}` but was run as `{}`",
            config_path.display(),
            cfg.task.as_str(),
            task.as_str()
        )));
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output = Some(out.clone());
    }
    let out_dir = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Config("no output directory: set `output` or pass --out".into()))?;
    let plan = cfg.plan()?;
    let dataset_root = cfg.dataset.clone().expect("plan checks the dataset path");
    let ds = ingest(&dataset_root, IngestOptions { planar: cfg.planar })?;

    let output = tasks::execute(&cfg, &plan, &ds)?;
    let n_runs = output.runs.rows.len();
    let manifest = Manifest {
        task: task.as_str().to_string(),
        config_hash: cfg.hash(),
        base_seed: cfg.seed,
        run_seeds: output.run_seeds.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
        artifact_version: output::ARTIFACT_VERSION.to_string(),
        workers: rayon::current_num_threads(),
        n_runs,
        n_failed: output.n_failed,
    };
    ResultWriter::create(&out_dir)?.write(&output, &manifest)?;
    if output.n_failed > 0 {
        log::warn!("{} of {} runs failed; see runs.csv", output.n_failed, n_runs);
    }
    Ok(RunSummary {
        out_dir,
        n_runs,
        n_failed: output.n_failed,
    })
}
