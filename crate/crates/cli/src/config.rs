//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use latentgraph::bench::SplitMode;
use latentgraph::filters::SpectralResponseFilter;
use latentgraph::graph::{GraphBuildConfig, LaplacianKind, Normalization, SimilarityMeasure};
use latentgraph::latent::FewShotClassifier;
use latentgraph::learners::{LogisticConfig, OneHiddenConfig, Placement};
use latentgraph::retrieval::{ChannelSet, VblGraphParams};
use latentgraph::structure::{EmbedConfig, DEFAULT_TRANSLATION_CAP};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    BenchUcv,
    BenchSscv,
    BenchDgs,
    FilterCompare,
    LatentGap,
    Fewshot,
    Retrieval,
    Translations,
    Embed,
}

impl TaskName {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::BenchUcv => "bench-ucv",
            TaskName::BenchSscv => "bench-sscv",
            TaskName::BenchDgs => "bench-dgs",
            TaskName::FilterCompare => "filter-compare",
            TaskName::LatentGap => "latent-gap",
            TaskName::Fewshot => "fewshot",
            TaskName::Retrieval => "retrieval",
            TaskName::Translations => "translations",
            TaskName::Embed => "embed",
        }
    }
}

/// `"edges"` uses the dataset's `edges.csv`; `{"build": {...}}` infers a
/// graph from the feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Edges,
    Build(GraphBuildConfig),
}

impl Default for GraphSource {
    fn default() -> Self {
        GraphSource::Edges
    }
}

impl GraphSource {
    pub fn label(&self) -> String {
        match self {
            GraphSource::Edges => "edges".into(),
            GraphSource::Build(cfg) => {
                let measure = match cfg.measure {
                    SimilarityMeasure::Cosine => "cosine".to_string(),
                    SimilarityMeasure::Covariance => "covariance".to_string(),
                    SimilarityMeasure::Rbf { gamma } => format!("rbf(gamma={gamma})"),
                };
                let k = cfg.k.map_or("all".to_string(), |k| k.to_string());
                let bin = if cfg.binarize { "/binary" } else { "" };
                format!("{measure}/k={k}/{}{bin}", cfg.normalization.name())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub mode: SplitMode,
    pub n_splits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub graphs: Vec<GraphSource>,
    pub normalizations: Vec<Normalization>,
    pub placements: Vec<Placement>,
    pub input_dropouts: Vec<f64>,
    pub edge_dropouts: Vec<f64>,
    pub m: Vec<usize>,
    pub channels: Vec<ChannelSet>,
}

impl Grids {
    fn used(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.graphs.is_empty() {
            out.push("graphs");
        }
        if !self.normalizations.is_empty() {
            out.push("normalizations");
        }
        if !self.placements.is_empty() {
            out.push("placements");
        }
        if !self.input_dropouts.is_empty() {
            out.push("input_dropouts");
        }
        if !self.edge_dropouts.is_empty() {
            out.push("edge_dropouts");
        }
        if !self.m.is_empty() {
            out.push("m");
        }
        if !self.channels.is_empty() {
            out.push("channels");
        }
        out
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskName,
    /// Relative `dataset` and `output` paths resolve against the config
    /// file's directory.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Runs per split (or per graph) for stochastic tasks.
    #[serde(default = "one")]
    pub seeds: usize,
    /// Treat `lat`/`lon` in `items.csv` as planar metric coordinates.
    #[serde(default)]
    pub planar: bool,
    #[serde(default)]
    pub graph: Option<GraphSource>,
    #[serde(default)]
    pub filters: Vec<String>,
    #[serde(default)]
    pub split: Option<SplitSection>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UcvParams {
    /// Cluster count; defaults to the number of label classes.
    pub clusters: Option<usize>,
}

impl Default for UcvParams {
    fn default() -> Self {
        UcvParams { clusters: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SscvMethod {
    LabelPropagation,
    Sgc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SscvParams {
    pub methods: Vec<SscvMethod>,
    pub logistic: LogisticConfig,
}

impl Default for SscvParams {
    fn default() -> Self {
        SscvParams {
            methods: vec![SscvMethod::LabelPropagation, SscvMethod::Sgc],
            logistic: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgsParams {
    pub signal_column: usize,
    /// Precomputed noisy signal; when absent, Gaussian noise at
    /// `noise_snr_db` is drawn per seed.
    pub noisy_column: Option<usize>,
    pub noise_snr_db: f64,
    /// Feature columns used to build the graph; defaults to every column
    /// other than the signal columns.
    pub graph_columns: Option<Vec<usize>>,
    pub taus: Option<Vec<f64>>,
    pub laplacian: LaplacianKind,
}

impl Default for DgsParams {
    fn default() -> Self {
        DgsParams {
            signal_column: 0,
            noisy_column: None,
            noise_snr_db: 7.0,
            graph_columns: None,
            taus: None,
            laplacian: LaplacianKind::Combinatorial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterCompareParams {
    pub model: OneHiddenConfig,
    pub laplacian: LaplacianKind,
}

impl Default for FilterCompareParams {
    fn default() -> Self {
        FilterCompareParams {
            model: OneHiddenConfig::default(),
            laplacian: LaplacianKind::SymmetricNormalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentGapParams {
    pub m: usize,
    /// Defaults to the number of label classes.
    pub n_classes: Option<usize>,
    pub k: usize,
    pub n_resamples: usize,
}

impl Default for LatentGapParams {
    fn default() -> Self {
        LatentGapParams {
            m: 50,
            n_classes: None,
            k: 20,
            n_resamples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewshotParams {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub episodes: usize,
    pub classifiers: Vec<FewShotClassifier>,
    /// Use an exported layer instead of `features.csv`.
    pub layer: Option<String>,
}

impl Default for FewshotParams {
    fn default() -> Self {
        FewshotParams {
            ways: 5,
            shots: 5,
            queries: 15,
            episodes: 1000,
            classifiers: vec![FewShotClassifier::OneNn],
            layer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothSide {
    None,
    Support,
    Query,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalParams {
    pub vbl: VblGraphParams,
    pub smooth: SmoothSide,
    /// Support items within this distance of a query are relevant when
    /// class ids are absent.
    pub relevance_m: f64,
    pub threshold_m: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            vbl: VblGraphParams::default(),
            smooth: SmoothSide::Support,
            relevance_m: 25.0,
            threshold_m: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationParams {
    pub cap: usize,
}

impl Default for TranslationParams {
    fn default() -> Self {
        TranslationParams {
            cap: DEFAULT_TRANSLATION_CAP,
        }
    }
}

/// Fully parsed configuration; building one performs every schema check.
#[derive(Debug, Clone)]
pub enum Plan {
    Ucv { graphs: Vec<GraphSource>, params: UcvParams },
    Sscv { graph: GraphSource, normalizations: Vec<Normalization>, split: SplitSection, params: SscvParams },
    Dgs { graph: GraphSource, params: DgsParams },
    FilterCompare {
        graph: GraphSource,
        filters: Vec<SpectralResponseFilter>,
        placements: Vec<Placement>,
        input_dropouts: Vec<f64>,
        edge_dropouts: Vec<f64>,
        split: Option<SplitSection>,
        params: FilterCompareParams,
    },
    LatentGap { params: LatentGapParams },
    Fewshot { filters: Vec<SpectralResponseFilter>, params: FewshotParams },
    Retrieval { channels: Vec<ChannelSet>, m: Vec<usize>, params: RetrievalParams },
    Translations { graph: GraphSource, params: TranslationParams },
    Embed { graph: GraphSource, params: EmbedConfig },
}

fn params<T: DeserializeOwned + Default>(task: TaskName, value: &serde_json::Value) -> CliResult<T> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(value.clone()).map_err(|e| CliError::Config(format!("{} params: {e}", task.as_str())))
}

fn parse_filters(specs: &[String]) -> CliResult<Vec<SpectralResponseFilter>> {
    specs
        .iter()
        .map(|s| {
            let f: SpectralResponseFilter = s.parse().map_err(|e| CliError::Config(format!("filter {e}")))?;
            f.validate().map_err(|e| CliError::Config(format!("filter `{s}`: {e}")))?;
            Ok(f)
        })
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.dataset, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form (keys sorted), ignoring the
    /// output location.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_value(ExperimentConfig {
            output: None,
            ..self.clone()
        })
        .expect("config serializes")
        .to_string();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn reject_unused(&self, allowed: &[&str], grids: &[&str]) -> CliResult<()> {
        let task = self.task.as_str();
        let mut present = Vec::new();
        if self.seeds != 1 {
            present.push("seeds");
        }
        if self.graph.is_some() {
            present.push("graph");
        }
        if !self.filters.is_empty() {
            present.push("filters");
        }
        if self.split.is_some() {
            present.push("split");
        }
        if self.planar {
            present.push("planar");
        }
        for field in present {
            if !allowed.contains(&field) {
                return Err(CliError::Config(format!("field `{field}` is not used by {task}")));
            }
        }
        for grid in self.grids.used() {
            if !grids.contains(&grid) {
                return Err(CliError::Config(format!("grid `{grid}` is not used by {task}")));
            }
        }
        if self.seeds == 0 {
            return Err(CliError::Config("seeds must be positive".into()));
        }
        Ok(())
    }

    pub fn plan(&self) -> CliResult<Plan> {
        if self.dataset.is_none() {
            return Err(CliError::Config(format!("{} needs a `dataset` path", self.task.as_str())));
        }
        let graph = || self.graph.clone().unwrap_or_default();
        let plan = match self.task {
            TaskName::BenchUcv => {
                self.reject_unused(&["seeds", "graph"], &["graphs"])?;
                if self.graph.is_some() && !self.grids.graphs.is_empty() {
                    return Err(CliError::Config("give either `graph` or `grids.graphs`, not both".into()));
                }
                let graphs = if self.grids.graphs.is_empty() { vec![graph()] } else { self.grids.graphs.clone() };
                Plan::Ucv {
                    graphs,
                    params: params(self.task, &self.params)?,
                }
            }
            TaskName::BenchSscv => {
                self.reject_unused(&["graph", "split"], &["normalizations"])?;
                let normalizations =
                    if self.grids.normalizations.is_empty() { Normalization::ALL.to_vec() } else { self.grids.normalizations.clone() };
                let split = self.split.clone().unwrap_or(SplitSection {
                    mode: SplitMode::Fraction { train_fraction: 0.05 },
                    n_splits: 100,
                });
                if matches!(split.mode, SplitMode::Fixed(_)) {
                    return Err(CliError::Config("bench-sscv draws random splits; fixed splits are not supported".into()));
                }
                let params: SscvParams = params(self.task, &self.params)?;
                if params.methods.is_empty() {
                    return Err(CliError::Config("bench-sscv needs at least one method".into()));
                }
                Plan::Sscv {
                    graph: graph(),
                    normalizations,
                    split,
                    params,
                }
            }
            TaskName::BenchDgs => {
                self.reject_unused(&["seeds", "graph"], &[])?;
                Plan::Dgs {
                    graph: graph(),
                    params: params(self.task, &self.params)?,
                }
            }
            TaskName::FilterCompare => {
                self.reject_unused(&["seeds", "graph", "filters", "split"], &["placements", "input_dropouts", "edge_dropouts"])?;
                let filters = parse_filters(&self.filters)?;
                if filters.is_empty() {
                    return Err(CliError::Config("filter-compare needs at least one filter".into()));
                }
                let or = |v: &Vec<f64>| if v.is_empty() { vec![0.0] } else { v.clone() };
                Plan::FilterCompare {
                    graph: graph(),
                    filters,
                    placements: if self.grids.placements.is_empty() { vec![Placement::Both] } else { self.grids.placements.clone() },
                    input_dropouts: or(&self.grids.input_dropouts),
                    edge_dropouts: or(&self.grids.edge_dropouts),
                    split: self.split.clone(),
                    params: params(self.task, &self.params)?,
                }
            }
            TaskName::LatentGap => {
                self.reject_unused(&["seeds"], &[])?;
                Plan::LatentGap {
                    params: params(self.task, &self.params)?,
                }
            }
            TaskName::Fewshot => {
                self.reject_unused(&["filters"], &[])?;
                let params: FewshotParams = params(self.task, &self.params)?;
                if params.classifiers.is_empty() || params.episodes == 0 {
                    return Err(CliError::Config("fewshot needs classifiers and a positive episode count".into()));
                }
                Plan::Fewshot {
                    filters: parse_filters(&self.filters)?,
                    params,
                }
            }
            TaskName::Retrieval => {
                self.reject_unused(&["planar"], &["m", "channels"])?;
                let params: RetrievalParams = params(self.task, &self.params)?;
                Plan::Retrieval {
                    channels: if self.grids.channels.is_empty() { vec![ChannelSet::ALL] } else { self.grids.channels.clone() },
                    m: if self.grids.m.is_empty() { vec![params.vbl.filter_m] } else { self.grids.m.clone() },
                    params,
                }
            }
            TaskName::Translations => {
                self.reject_unused(&["graph"], &[])?;
                Plan::Translations {
                    graph: graph(),
                    params: params(self.task, &self.params)?,
                }
            }
            TaskName::Embed => {
                self.reject_unused(&["seeds", "graph"], &[])?;
                Plan::Embed {
                    graph: graph(),
                    params: params(self.task, &self.params)?,
                }
            }
        };
        Ok(plan)
    }
}
