//! Diagnostics on exported latent representations: per-class denoising for
//! few-shot classification and the label smoothness gap between layers.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_rows, Error, Result};
use crate::filters::{evaluate_response, SpectralResponseFilter};
use crate::graph::{knn_sparsify_symmetrize, similarity_matrix, Graph, LaplacianKind, SimilarityMeasure};
use crate::learners::{accuracy, knn_classify, ncm_classify, train_logistic, LogisticConfig};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::spectral::{eigendecompose, SpectralDecomposition};

/// Smallest cosine weight kept in latent graphs.
const LATENT_MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures {
    pub layer_name: String,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Cosine k-NN graph with union symmetrization; nonpositive similarities
/// are dropped. `k` is clamped to `n - 1`.
pub fn cosine_knn_graph(features: ArrayView2<f64>, k: usize) -> Result<Graph> {
    let n = features.nrows();
    if n < 2 {
        return Ok(Graph::empty(n));
    }
    let sim = similarity_matrix(features, SimilarityMeasure::Cosine)?;
    knn_sparsify_symmetrize(sim.view(), k.clamp(1, n - 1), LATENT_MIN_WEIGHT)
}

fn class_decomposition(graph: &Graph, filter: &SpectralResponseFilter) -> Result<SpectralDecomposition> {
    match filter.expected_kind() {
        Some(kind) => eigendecompose(graph.laplacian(kind)?.view(), kind),
        None => eigendecompose(
            graph.normalized_laplacian_lenient().view(),
            LaplacianKind::SymmetricNormalized,
        ),
    }
}

/// Filters the rows of each class over that class's own cosine k-NN graph
/// (`k = None` connects the whole class). Classes with one row pass through.
pub fn per_class_filter(
    features: ArrayView2<f64>,
    labels: &[usize],
    filter: &SpectralResponseFilter,
    k: Option<usize>,
) -> Result<Array2<f64>> {
    check_rows("labels", features.nrows(), labels.len())?;
    filter.validate()?;
    let mut out = features.to_owned();
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    for c in 0..n_classes {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            log::warn!("class {c} has a single sample; passing it through unfiltered");
            continue;
        }
        let block = features.select(Axis(0), &rows);
        let graph = cosine_knn_graph(block.view(), k.unwrap_or(rows.len() - 1))?;
        let dec = class_decomposition(&graph, filter)?;
        let h = evaluate_response(filter, dec.eigenvalues().view(), dec.lambda_max())?;
        let filtered = dec.apply_response(h.view(), block.view())?;
        for (bi, &i) in rows.iter().enumerate() {
            out.row_mut(i).assign(&filtered.row(bi));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotClassifier {
    OneNn,
    Ncm,
    Lr,
    /// Logistic regression on `[filtered ‖ raw]` support rows; queries are
    /// represented as `[raw ‖ raw]`.
    ConcatLr,
}

impl std::str::FromStr for FewShotClassifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1nn" | "one_nn" => Ok(FewShotClassifier::OneNn),
            "ncm" => Ok(FewShotClassifier::Ncm),
            "lr" => Ok(FewShotClassifier::Lr),
            "concat_lr" => Ok(FewShotClassifier::ConcatLr),
            other => Err(Error::Parse(format!("unknown few-shot classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub ways: usize,
    pub shots: usize,
    pub support: Array2<f64>,
    /// Episode-local classes in `0..ways`.
    pub support_labels: Vec<usize>,
    pub query: Array2<f64>,
    pub query_labels: Vec<usize>,
    /// Dataset class of each episode-local class.
    pub classes: Vec<usize>,
}

impl Episode {
    pub fn validate(&self) -> Result<()> {
        check_rows("support labels", self.support.nrows(), self.support_labels.len())?;
        check_rows("query labels", self.query.nrows(), self.query_labels.len())?;
        if self.support.nrows() != self.ways * self.shots {
            return Err(Error::Contract(format!(
                "support must hold {}x{} rows, got {}",
                self.ways,
                self.shots,
                self.support.nrows()
            )));
        }
        let mut counts = vec![0usize; self.ways];
        for &l in self.support_labels.iter().chain(&self.query_labels) {
            if l >= self.ways {
                return Err(Error::Contract(format!("episode label {l} outside [0, {})", self.ways)));
            }
        }
        for &l in &self.support_labels {
            counts[l] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n != self.shots) {
            return Err(Error::Contract(format!(
                "class {c} has {} support rows, expected {}",
                counts[c], self.shots
            )));
        }
        Ok(())
    }
}

/// Draws `ways` distinct classes with at least `shots + queries` rows each,
/// then `shots` support and `queries` query rows per class.
pub fn sample_episode(
    features: ArrayView2<f64>,
    labels: &[usize],
    ways: usize,
    shots: usize,
    queries: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    check_rows("labels", features.nrows(), labels.len())?;
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let eligible: Vec<usize> = (0..n_classes).filter(|&c| by_class[c].len() >= shots + queries).collect();
    if eligible.len() < ways {
        return Err(Error::InvalidParameter(format!(
            "only {} classes have {} samples, need {ways}",
            eligible.len(),
            shots + queries
        )));
    }
    let classes: Vec<usize> = eligible.choose_multiple(rng, ways).copied().collect();
    let (mut s_rows, mut s_lab, mut q_rows, mut q_lab) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (local, &c) in classes.iter().enumerate() {
        let picked: Vec<usize> = by_class[c].choose_multiple(rng, shots + queries).copied().collect();
        s_rows.extend_from_slice(&picked[..shots]);
        s_lab.extend(std::iter::repeat_n(local, shots));
        q_rows.extend_from_slice(&picked[shots..]);
        q_lab.extend(std::iter::repeat_n(local, queries));
    }
    Ok(Episode {
        ways,
        shots,
        support: features.select(Axis(0), &s_rows),
        support_labels: s_lab,
        query: features.select(Axis(0), &q_rows),
        query_labels: q_lab,
        classes,
    })
}

/// Query accuracy after filtering the support set class by class. `None`
/// leaves the support unchanged. Queries are never filtered.
pub fn fewshot_episode(
    episode: &Episode,
    filter: Option<&SpectralResponseFilter>,
    classifier: FewShotClassifier,
) -> Result<f64> {
    episode.validate()?;
    let support = match filter {
        Some(f) => per_class_filter(episode.support.view(), &episode.support_labels, f, None)?,
        None => episode.support.clone(),
    };
    let pred = match classifier {
        FewShotClassifier::OneNn => knn_classify(support.view(), &episode.support_labels, episode.query.view(), 1)?,
        FewShotClassifier::Ncm => ncm_classify(support.view(), &episode.support_labels, episode.query.view())?,
        FewShotClassifier::Lr => {
            let cfg = LogisticConfig::few_shot(support.nrows());
            let (model, _) = train_logistic(support.view(), &episode.support_labels, episode.ways, &cfg, 0)?;
            model.predict(episode.query.view())?
        }
        FewShotClassifier::ConcatLr => {
            let s = concatenate![Axis(1), support, episode.support];
            let q = concatenate![Axis(1), episode.query, episode.query];
            let cfg = LogisticConfig::few_shot(s.nrows());
            let (model, _) = train_logistic(s.view(), &episode.support_labels, episode.ways, &cfg, 0)?;
            model.predict(q.view())?
        }
    };
    Ok(accuracy(&pred, &episode.query_labels))
}

/// `Σ_c s_cᵀ L s_c` over binary label indicators with the combinatorial
/// Laplacian, which equals the weight of cross-class edges counted in both
/// directions.
pub fn label_smoothness(graph: &Graph, labels: &[usize]) -> Result<f64> {
    check_rows("labels", graph.n_vertices(), labels.len())?;
    let a = graph.adjacency();
    let mut total = 0.0;
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] != labels[j] {
                total += a[[i, j]];
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapParams {
    /// Samples per class.
    pub m: usize,
    pub n_classes: usize,
    pub k: usize,
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for GapParams {
    fn default() -> Self {
        GapParams {
            m: 50,
            n_classes: 10,
            k: 20,
            n_resamples: 10,
            seed: 0,
        }
    }
}

impl GapParams {
    pub fn normalization_bound(&self) -> f64 {
        2.0 * (self.m * self.n_classes * self.k) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessGapReport {
    /// `(layer name, normalized σ)` in layer order.
    pub per_layer_smoothness: Vec<(String, f64)>,
    pub gap: f64,
    pub normalization_bound: f64,
}

/// Rows drawn for one resample: `m` per class, shuffled from the sorted
/// class membership.
fn draw(labels: &[usize], params: &GapParams, rng: &mut Rng) -> Result<Vec<usize>> {
    let mut picked = Vec::with_capacity(params.m * params.n_classes);
    for c in 0..params.n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < params.m {
            return Err(Error::InvalidParameter(format!(
                "class {c} has {} samples, fewer than M={}",
                members.len(),
                params.m
            )));
        }
        members.shuffle(rng);
        picked.extend_from_slice(&members[..params.m]);
    }
    Ok(picked)
}

/// Normalized label smoothness of every layer, averaged over resamples.
/// All layers share the rows drawn in a given resample.
pub fn smoothness_evolution(layers: &[LayerFeatures], params: &GapParams) -> Result<Vec<f64>> {
    let first = layers
        .first()
        .ok_or_else(|| Error::InvalidParameter("no layers given".into()))?;
    for layer in layers {
        check_rows(&format!("layer {}", layer.layer_name), first.labels.len(), layer.features.nrows())?;
        if layer.labels != first.labels {
            return Err(Error::Contract(format!(
                "layer {} has labels that differ from layer {}",
                layer.layer_name, first.layer_name
            )));
        }
    }
    if params.m == 0 || params.n_classes == 0 || params.k == 0 || params.n_resamples == 0 {
        return Err(Error::InvalidParameter("M, C, k and resample count must be positive".into()));
    }
    if let Some(&bad) = first.labels.iter().find(|&&l| l >= params.n_classes) {
        return Err(Error::InvalidParameter(format!("label {bad} outside [0, {})", params.n_classes)));
    }
    let bound = params.normalization_bound();
    let draws = (0..params.n_resamples)
        .map(|r| draw(&first.labels, params, &mut rng_from_seed(derive_seed(params.seed, r as u64))))
        .collect::<Result<Vec<_>>>()?;
    let per_resample = draws
        .par_iter()
        .map(|rows| {
            let labels: Vec<usize> = rows.iter().map(|&i| first.labels[i]).collect();
            layers
                .iter()
                .map(|layer| {
                    let sub = layer.features.select(Axis(0), rows);
                    let graph = cosine_knn_graph(sub.view(), params.k)?;
                    Ok(label_smoothness(&graph, &labels)? / bound)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..layers.len())
        .map(|l| per_resample.iter().map(|r| r[l]).sum::<f64>() / params.n_resamples as f64)
        .collect())
}

/// `|σ(last) - σ(penultimate)|` of normalized label smoothness.
pub fn smoothness_gap(layers: &[LayerFeatures], params: &GapParams) -> Result<SmoothnessGapReport> {
    if layers.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "the smoothness gap needs at least 2 layers, got {}",
            layers.len()
        )));
    }
    let curve = smoothness_evolution(layers, params)?;
    let l = curve.len();
    Ok(SmoothnessGapReport {
        per_layer_smoothness: layers.iter().map(|x| x.layer_name.clone()).zip(curve.iter().copied()).collect(),
        gap: (curve[l - 1] - curve[l - 2]).abs(),
        normalization_bound: params.normalization_bound(),
    })
}
