//! Graph-inference benchmark tasks and the relaxed filter-comparison framework.

use std::collections::{HashMap, HashSet};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{check_rows, Error, Result};
use crate::filters::{apply_spectral, filter_operator, SpectralResponseFilter};
use crate::graph::{build_graph, components_of, Graph, GraphBuildConfig, LaplacianKind};
use crate::learners::{
    accuracy, adjusted_mutual_information, argmax_rows, kmeans_restarts, train_logistic, train_one_hidden,
    LogisticConfig, NodeSplit, OneHiddenConfig, Placement,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{eigendecompose, symmetric_eigen};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    PerClassCounts {
        train_per_class: usize,
        valid_per_class: usize,
    },
    /// Stratified: each class contributes `max(1, round(f·n_c))` train rows,
    /// the rest are test rows.
    Fraction { train_fraction: f64 },
    Fixed(NodeSplit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub n_splits: usize,
    pub base_seed: u64,
}

impl SplitSpec {
    /// Split `i` is drawn from stream `derive_seed(base_seed, i)`.
    pub fn generate(&self, labels: &[usize], n_classes: usize) -> Result<Vec<NodeSplit>> {
        if self.n_splits == 0 {
            return Err(Error::InvalidParameter("n_splits must be positive".into()));
        }
        if let SplitMode::Fixed(split) = &self.mode {
            split.validate(labels.len())?;
            return Ok(vec![split.clone(); self.n_splits]);
        }
        let mut by_class = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(Error::InvalidParameter(format!("label {l} outside [0, {n_classes})")));
            }
            by_class[l].push(i);
        }
        (0..self.n_splits)
            .map(|s| {
                let mut rng = rng_from_seed(derive_seed(self.base_seed, s as u64));
                let mut split = NodeSplit::default();
                for (c, members) in by_class.iter().enumerate() {
                    let mut members = members.clone();
                    members.shuffle(&mut rng);
                    let (n_train, n_valid) = match self.mode {
                        SplitMode::PerClassCounts {
                            train_per_class,
                            valid_per_class,
                        } => {
                            if members.len() < train_per_class + valid_per_class {
                                return Err(Error::InvalidParameter(format!(
                                    "class {c} has {} vertices, fewer than {} train + {} valid",
                                    members.len(),
                                    train_per_class,
                                    valid_per_class
                                )));
                            }
                            (train_per_class, valid_per_class)
                        }
                        SplitMode::Fraction { train_fraction } => {
                            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                                return Err(Error::InvalidParameter(format!(
                                    "train fraction must lie in (0, 1), got {train_fraction}"
                                )));
                            }
                            let k = ((train_fraction * members.len() as f64).round() as usize).max(1);
                            (k.min(members.len()), 0)
                        }
                        SplitMode::Fixed(_) => unreachable!(),
                    };
                    split.train.extend_from_slice(&members[..n_train]);
                    split.valid.extend_from_slice(&members[n_train..n_train + n_valid]);
                    split.test.extend_from_slice(&members[n_train + n_valid..]);
                }
                split.train.sort_unstable();
                split.valid.sort_unstable();
                split.test.sort_unstable();
                Ok(split)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMetric {
    pub mean: f64,
    pub ci95_halfwidth: f64,
    pub n_runs: usize,
    pub per_run: Vec<f64>,
}

impl AggregatedMetric {
    /// 95% half-width: `1.96·sd/√n` for `n ≥ 30`, Student-t quantile below.
    /// A single run has half-width 0.
    pub fn from_runs(per_run: Vec<f64>) -> Result<Self> {
        let n = per_run.len();
        if n == 0 {
            return Err(Error::InvalidParameter("cannot aggregate zero runs".into()));
        }
        let mean = per_run.iter().sum::<f64>() / n as f64;
        let ci95_halfwidth = if n == 1 {
            0.0
        } else {
            let var = per_run.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let z = if n >= 30 {
                1.96
            } else {
                StudentsT::new(0.0, 1.0, (n - 1) as f64)
                    .expect("positive degrees of freedom")
                    .inverse_cdf(0.975)
            };
            z * var.sqrt() / (n as f64).sqrt()
        };
        Ok(AggregatedMetric {
            mean,
            ci95_halfwidth,
            n_runs: n,
            per_run,
        })
    }
}

/// Spectral clustering score: eigenvectors 2..=c+1 of the normalized
/// Laplacian, k-means with `c` clusters, AMI against `labels`.
pub fn ucv_from_graph(graph: &Graph, labels: &[usize], c: usize, seed: u64) -> Result<f64> {
    let n = graph.n_vertices();
    check_rows("labels", n, labels.len())?;
    if c == 0 || c + 1 > n {
        return Err(Error::InvalidParameter(format!("class count {c} needs at least {} vertices", c + 1)));
    }
    let l = graph.normalized_laplacian_lenient();
    let (_, vectors) = symmetric_eigen(l.view())?;
    let embedding = vectors.slice(ndarray::s![.., 1..=c]).to_owned();
    let clusters = kmeans_restarts(embedding.view(), c, seed, 300, 10)?;
    adjusted_mutual_information(&clusters.assignment, labels)
}

pub fn task_ucv(features: ArrayView2<f64>, labels: &[usize], config: &GraphBuildConfig, c: usize, seed: u64) -> Result<f64> {
    let (graph, _) = build_graph(features, config)?;
    ucv_from_graph(&graph, labels, c, seed)
}

/// `exp(S)` for symmetric `S`, block by block over its connected components,
/// so that entries between components are exactly zero.
pub fn symmetric_matrix_exp(s: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch(format!("matrix must be square, got {:?}", s.dim())));
    }
    let mut out = Array2::zeros((n, n));
    for comp in components_of(s) {
        let block = s.select(Axis(0), &comp).select(Axis(1), &comp);
        let (vals, vecs) = symmetric_eigen(block.view())?;
        let scaled = &vecs * &vals.mapv(f64::exp);
        let exp_block = scaled.dot(&vecs.t());
        for (bi, &i) in comp.iter().enumerate() {
            for (bj, &j) in comp.iter().enumerate() {
                out[[i, j]] = exp_block[[bi, bj]];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub accuracy: f64,
    /// Prediction for every vertex.
    pub predictions: Vec<usize>,
    /// Evaluated vertices whose component contains no labeled vertex.
    pub unreached: Vec<usize>,
}

/// One diffusion of the masked label indicators by `exp(S)`, then row-wise
/// argmax (ties to class 0). Labeled rows are not clamped.
pub fn task_sscv_label_propagation(
    s: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    labeled: &[usize],
    evaluated: &[usize],
) -> Result<PropagationResult> {
    propagate_labels(symmetric_matrix_exp(s)?.view(), labels, n_classes, labeled, evaluated)
}

/// Label propagation with a precomputed kernel such as `exp(S)`, for
/// reuse across splits. Vertices with no kernel path to a labeled vertex
/// are reported as unreached.
pub fn propagate_labels(
    kernel: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    labeled: &[usize],
    evaluated: &[usize],
) -> Result<PropagationResult> {
    let n = kernel.nrows();
    check_rows("labels", n, labels.len())?;
    if labeled.is_empty() {
        return Err(Error::Contract("label propagation needs at least one labeled vertex".into()));
    }
    let mut y = Array2::zeros((n, n_classes));
    for &i in labeled {
        y[[i, labels[i]]] = 1.0;
    }
    let diffused = kernel.dot(&y);
    let predictions = argmax_rows(diffused.view());

    let is_labeled: HashSet<usize> = labeled.iter().copied().collect();
    let mut reached = vec![false; n];
    for comp in components_of(kernel) {
        if comp.iter().any(|v| is_labeled.contains(v)) {
            for v in comp {
                reached[v] = true;
            }
        }
    }
    let unreached: Vec<usize> = evaluated.iter().copied().filter(|&v| !reached[v]).collect();
    if !unreached.is_empty() {
        log::warn!(
            "{} evaluated vertices lie in components without labels; they are scored with the tie rule",
            unreached.len()
        );
    }
    let pred: Vec<usize> = evaluated.iter().map(|&i| predictions[i]).collect();
    let truth: Vec<usize> = evaluated.iter().map(|&i| labels[i]).collect();
    Ok(PropagationResult {
        accuracy: accuracy(&pred, &truth),
        predictions,
        unreached,
    })
}

/// Logistic regression on `S²·X`, scored on `evaluated` rows.
#[allow(clippy::too_many_arguments)]
pub fn task_sscv_sgc(
    features: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    s: ArrayView2<f64>,
    train: &[usize],
    evaluated: &[usize],
    config: &LogisticConfig,
    seed: u64,
) -> Result<f64> {
    check_rows("features", s.nrows(), features.nrows())?;
    let diffused = s.dot(&s.dot(&features));
    sgc_classify(diffused.view(), labels, n_classes, train, evaluated, config, seed)
}

/// The classification half of [`task_sscv_sgc`] on already diffused rows.
pub fn sgc_classify(
    diffused: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    train: &[usize],
    evaluated: &[usize],
    config: &LogisticConfig,
    seed: u64,
) -> Result<f64> {
    check_rows("labels", diffused.nrows(), labels.len())?;
    let x_train = diffused.select(Axis(0), train);
    let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let (model, _) = train_logistic(x_train.view(), &y_train, n_classes, config, seed)?;
    let pred = model.predict(diffused.select(Axis(0), evaluated).view())?;
    let truth: Vec<usize> = evaluated.iter().map(|&i| labels[i]).collect();
    Ok(accuracy(&pred, &truth))
}

/// Reported in place of an infinite SNR.
pub const SNR_CAP_DB: f64 = 300.0;

/// `10·log10(‖clean‖² / ‖clean - estimate‖²)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(clean: ArrayView1<f64>, estimate: ArrayView1<f64>) -> Result<f64> {
    check_rows("estimate", clean.len(), estimate.len())?;
    let energy = clean.dot(&clean);
    if energy == 0.0 {
        return Err(Error::Degenerate("SNR is undefined for a zero clean signal".into()));
    }
    let residual: f64 = clean.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    if residual == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (energy / residual).log10()).min(SNR_CAP_DB))
}

/// `0, 0.025, ..., 1`
pub fn default_tau_sweep() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.025).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgsResult {
    pub best_tau: f64,
    pub best_snr: f64,
    pub input_snr: f64,
    /// `(tau, snr)` for every swept value.
    pub curve: Vec<(f64, f64)>,
}

/// Simoncelli-filters `noisy` for every `tau` and keeps the best SNR.
pub fn task_dgs(
    clean: ArrayView1<f64>,
    noisy: ArrayView1<f64>,
    graph: &Graph,
    kind: LaplacianKind,
    tau_sweep: &[f64],
) -> Result<DgsResult> {
    let n = graph.n_vertices();
    check_rows("clean signal", n, clean.len())?;
    check_rows("noisy signal", n, noisy.len())?;
    if tau_sweep.is_empty() {
        return Err(Error::InvalidParameter("tau sweep is empty".into()));
    }
    let dec = eigendecompose(graph.laplacian(kind)?.view(), kind)?;
    let input_snr = snr_db(clean, noisy)?;
    let signal = noisy.insert_axis(Axis(1));
    let mut curve = Vec::with_capacity(tau_sweep.len());
    for &tau in tau_sweep {
        let est = apply_spectral(&SpectralResponseFilter::Simoncelli { tau }, signal, &dec)?;
        curve.push((tau, snr_db(clean, est.column(0))?));
    }
    let &(best_tau, best_snr) = curve
        .iter()
        .fold(&curve[0], |best, c| if c.1 > best.1 { c } else { best });
    Ok(DgsResult {
        best_tau,
        best_snr,
        input_snr,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterCompareConfig {
    pub filters: Vec<SpectralResponseFilter>,
    pub placements: Vec<Placement>,
    pub input_dropouts: Vec<f64>,
    pub edge_dropouts: Vec<f64>,
    pub split: SplitSpec,
    pub seeds_per_split: usize,
    #[serde(default)]
    pub model: OneHiddenConfig,
    /// Laplacian for filters not tied to the augmented graph.
    #[serde(default = "default_kind")]
    pub laplacian: LaplacianKind,
}

fn default_kind() -> LaplacianKind {
    LaplacianKind::SymmetricNormalized
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub filter: SpectralResponseFilter,
    pub placement: Placement,
    pub input_dropout: f64,
    pub edge_dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub combination: usize,
    pub split_id: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub valid_acc: f64,
    pub test_acc: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationSummary {
    pub combination: Combination,
    pub valid: AggregatedMetric,
    pub test: AggregatedMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub combinations: Vec<Combination>,
    /// Ordered by (combination, split, seed).
    pub runs: Vec<RunRecord>,
    /// Best mean validation accuracy first.
    pub ranked: Vec<CombinationSummary>,
}

impl FilterCompareConfig {
    pub fn combinations(&self) -> Vec<Combination> {
        let mut out = Vec::new();
        for &filter in &self.filters {
            for &placement in &self.placements {
                for &input_dropout in &self.input_dropouts {
                    for &edge_dropout in &self.edge_dropouts {
                        out.push(Combination {
                            filter,
                            placement,
                            input_dropout,
                            edge_dropout,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Seed of run `(split_id, seed_index)`; shared by every combination.
pub fn run_seed(base_seed: u64, split_id: usize, seed_index: usize) -> u64 {
    derive_seed(derive_seed(base_seed, split_id as u64), seed_index as u64)
}

/// Trains one model per combination × split × seed, in parallel.
pub fn relaxed_filter_comparison(
    features: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    graph: &Graph,
    config: &FilterCompareConfig,
) -> Result<ComparisonResult> {
    let combinations = config.combinations();
    if combinations.is_empty() {
        return Err(Error::InvalidParameter("every grid must be nonempty".into()));
    }
    if config.seeds_per_split == 0 {
        return Err(Error::InvalidParameter("seeds_per_split must be positive".into()));
    }
    check_rows("features", graph.n_vertices(), features.nrows())?;
    let splits = config.split.generate(labels, n_classes)?;

    let mut operators: HashMap<String, Array2<f64>> = HashMap::new();
    for c in &combinations {
        let key = c.filter.to_string();
        if c.placement != Placement::None && !operators.contains_key(&key) {
            operators.insert(key, filter_operator(&c.filter, graph, config.laplacian)?);
        }
    }

    let jobs: Vec<(usize, usize, usize)> = (0..combinations.len())
        .flat_map(|c| (0..splits.len()).flat_map(move |s| (0..config.seeds_per_split).map(move |k| (c, s, k))))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(ci, si, ki)| {
            let combo = &combinations[ci];
            let seed = run_seed(config.split.base_seed, si, ki);
            let model = OneHiddenConfig {
                input_dropout: combo.input_dropout,
                edge_dropout: combo.edge_dropout,
                ..config.model
            };
            let op = operators.get(&combo.filter.to_string()).map(|m| m.view());
            let (_, report) =
                train_one_hidden(features, labels, n_classes, &splits[si], op, combo.placement, &model, seed)?;
            Ok(RunRecord {
                combination: ci,
                split_id: si,
                seed_index: ki,
                seed,
                valid_acc: report.best_validation_accuracy.unwrap_or(f64::NAN),
                test_acc: report.test_accuracy_at_best.unwrap_or(f64::NAN),
                epochs: report.epochs_run,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ranked = combinations
        .iter()
        .enumerate()
        .map(|(ci, &combination)| {
            let mine = runs.iter().filter(|r| r.combination == ci);
            Ok(CombinationSummary {
                combination,
                valid: AggregatedMetric::from_runs(mine.clone().map(|r| r.valid_acc).collect())?,
                test: AggregatedMetric::from_runs(mine.map(|r| r.test_acc).collect())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.valid.mean.total_cmp(&a.valid.mean));
    Ok(ComparisonResult {
        combinations,
        runs,
        ranked,
    })
}

/// Mean of each column; used to compare a low-pass output to the DC level.
pub fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}
