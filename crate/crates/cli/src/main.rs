use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latentgraph::filters::SpectralResponseFilter;
use latentgraph_cli::config::TaskName;
use latentgraph_cli::dataset::{ingest, write_dataset, IngestOptions};
use latentgraph_cli::error::{CliError, CliResult};
use latentgraph_cli::{plotdata, run_experiment, Overrides};

#[derive(Parser)]
#[command(name = "latentgraph", version, about = "Graph signal processing experiments")]
struct Cli {
    /// Worker threads for parallel runs.
    #[arg(long, global = true, env = "LATENTGRAPH_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    SmoothnessCurve,
    FilterResponse,
    Ablation,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset directory; with --out, write its normalized form.
    Ingest {
        root: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Read item coordinates as planar meters instead of degrees.
        #[arg(long)]
        planar: bool,
    },
    BenchUcv(RunArgs),
    BenchSscv(RunArgs),
    BenchDgs(RunArgs),
    FilterCompare(RunArgs),
    LatentGap(RunArgs),
    Fewshot(RunArgs),
    Retrieval(RunArgs),
    Translations(RunArgs),
    Embed(RunArgs),
    /// Emit `x,y,series` CSV for plotting.
    Plotdata {
        #[arg(value_enum)]
        kind: PlotKind,
        /// Results directory (smoothness-curve, ablation).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Filter spec, repeatable (filter-response).
        #[arg(long = "filter")]
        filters: Vec<String>,
        #[arg(long, default_value_t = 2.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let (task, args) = match cli.command {
        Command::Ingest { root, out, planar } => {
            let ds = ingest(&root, IngestOptions { planar })?;
            log::info!("{}: {} vertices, {} classes", root.display(), ds.n(), ds.n_classes);
            if let Some(out) = out {
                write_dataset(&ds, &out)?;
            }
            return Ok(());
        }
        Command::Plotdata {
            kind,
            input,
            filters,
            lambda_max,
            step,
            out,
        } => {
            let need_input = || input.clone().ok_or_else(|| CliError::Config("this plot kind needs --input".into()));
            let table = match kind {
                PlotKind::FilterResponse => {
                    let parsed = filters
                        .iter()
                        .map(|s| s.parse::<SpectralResponseFilter>())
                        .collect::<Result<Vec<_>, _>>()?;
                    plotdata::filter_response(&parsed, lambda_max, step)?
                }
                PlotKind::Ablation => plotdata::ablation(&need_input()?)?,
                PlotKind::SmoothnessCurve => plotdata::smoothness_curve(&need_input()?)?,
            };
            let csv = table.to_csv()?;
            return match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e)),
                None => std::io::stdout()
                    .write_all(csv.as_bytes())
                    .map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e)),
            };
        }
        Command::BenchUcv(a) => (TaskName::BenchUcv, a),
        Command::BenchSscv(a) => (TaskName::BenchSscv, a),
        Command::BenchDgs(a) => (TaskName::BenchDgs, a),
        Command::FilterCompare(a) => (TaskName::FilterCompare, a),
        Command::LatentGap(a) => (TaskName::LatentGap, a),
        Command::Fewshot(a) => (TaskName::Fewshot, a),
        Command::Retrieval(a) => (TaskName::Retrieval, a),
        Command::Translations(a) => (TaskName::Translations, a),
        Command::Embed(a) => (TaskName::Embed, a),
    };
    let summary = run_experiment(
        task,
        &args.config,
        &Overrides {
            seed: args.seed,
            out: args.out,
        },
    )?;
    log::info!(
        "{} runs ({} failed) written to {}",
        summary.n_runs,
        summary.n_failed,
        summary.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
