//! Dense weighted graphs, similarity-graph inference and adjacency
//! normalizations.
//!
//! Graphs are stored as dense symmetric adjacency matrices. The target scale
//! is a few thousand vertices, where dense spectral methods remain practical.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default threshold below which similarity edges are dropped.
pub const DEFAULT_MIN_EDGE_WEIGHT: f64 = 1e-4;

/// Relative tolerance used when accepting a user supplied matrix as symmetric.
const SYMMETRY_TOL: f64 = 1e-10;

/// Undirected weighted graph with nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Array2<f64>,
    degree: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `D - A`
    Combinatorial,
    /// `I - D^{-1/2} A D^{-1/2}`
    SymmetricNormalized,
    /// `I - D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree of `A + I`.
    AugmentedSymmetricNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMeasure {
    Cosine,
    Covariance,
    Rbf { gamma: f64 },
}

/// Transform turning an adjacency matrix into a diffusion operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    SymmetricDegree,
    Augmented,
    AugmentedSymmetricDegree,
}

impl Normalization {
    pub const ALL: [Normalization; 4] = [
        Normalization::None,
        Normalization::SymmetricDegree,
        Normalization::Augmented,
        Normalization::AugmentedSymmetricDegree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::SymmetricDegree => "symmetric_degree",
            Normalization::Augmented => "augmented",
            Normalization::AugmentedSymmetricDegree => "augmented_symmetric_degree",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphBuildConfig {
    pub measure: SimilarityMeasure,
    /// Neighbors kept per vertex; `None` keeps every pair.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default = "default_min_edge_weight")]
    pub min_edge_weight: f64,
    /// Replace every retained weight by 1.
    #[serde(default)]
    pub binarize: bool,
}

fn default_normalization() -> Normalization {
    Normalization::None
}

fn default_min_edge_weight() -> f64 {
    DEFAULT_MIN_EDGE_WEIGHT
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        GraphBuildConfig {
            measure: SimilarityMeasure::Cosine,
            k: Some(10),
            normalization: Normalization::None,
            min_edge_weight: DEFAULT_MIN_EDGE_WEIGHT,
            binarize: false,
        }
    }
}

impl Graph {
    /// Validates and wraps an adjacency matrix. Entries must be finite and
    /// nonnegative; tiny asymmetries from floating point are averaged out.
    pub fn from_adjacency(mut adjacency: Array2<f64>) -> Result<Self> {
        let (n, m) = adjacency.dim();
        if n != m {
            return Err(Error::DimensionMismatch(format!(
                "adjacency must be square, got {n}x{m}"
            )));
        }
        let scale = adjacency.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..n {
            for j in 0..n {
                let w = adjacency[[i, j]];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Contract(format!(
                        "adjacency[{i},{j}] = {w} is not a finite nonnegative weight"
                    )));
                }
            }
            for j in (i + 1)..n {
                let (a, b) = (adjacency[[i, j]], adjacency[[j, i]]);
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Contract(format!(
                        "adjacency is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                adjacency[[i, j]] = avg;
                adjacency[[j, i]] = avg;
            }
        }
        let degree = adjacency.sum_axis(Axis(1));
        Ok(Graph { adjacency, degree })
    }

    /// Builds a graph from undirected weighted edges. Repeated edges keep the
    /// largest weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut a = Array2::zeros((n, n));
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({u},{v}) out of range for {n} vertices"
                )));
            }
            let cur: f64 = a[[u, v]];
            let w = cur.max(w);
            a[[u, v]] = w;
            a[[v, u]] = w;
        }
        Graph::from_adjacency(a)
    }

    pub fn empty(n: usize) -> Self {
        Graph {
            adjacency: Array2::zeros((n, n)),
            degree: Array1::zeros(n),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.degree.len()
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    pub fn into_adjacency(self) -> Array2<f64> {
        self.adjacency
    }

    pub fn degree(&self) -> &Array1<f64> {
        &self.degree
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[[u, v]] > 0.0
    }

    /// Number of undirected edges, self-loops counted once.
    pub fn n_edges(&self) -> usize {
        let n = self.n_vertices();
        let mut count = 0;
        for i in 0..n {
            for j in i..n {
                if self.adjacency[[i, j]] > 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    /// Neighbors of `v` (excluding `v` itself) in increasing index order.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.adjacency
            .row(v)
            .iter()
            .enumerate()
            .filter(|&(u, &w)| u != v && w > 0.0)
            .map(|(u, _)| u)
            .collect()
    }

    /// Count of nonzero off-diagonal entries in row `v`.
    pub fn neighbor_count(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        components_of(self.adjacency.view())
    }

    pub fn is_connected(&self) -> bool {
        self.n_vertices() > 0 && self.components().len() == 1
    }

    /// Hop distances from `source` (`None` when unreachable).
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.n_vertices();
        let mut dist = vec![None; n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// All-pairs shortest path lengths using edge weights as lengths
    /// (Floyd-Warshall). Unreachable pairs are `f64::INFINITY`.
    pub fn shortest_path_lengths(&self) -> Array2<f64> {
        let n = self.n_vertices();
        let mut d = Array2::from_elem((n, n), f64::INFINITY);
        for i in 0..n {
            d[[i, i]] = 0.0;
            for j in self.neighbors(i) {
                d[[i, j]] = self.adjacency[[i, j]];
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = d[[i, k]];
                if !dik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let cand = dik + d[[k, j]];
                    if cand < d[[i, j]] {
                        d[[i, j]] = cand;
                    }
                }
            }
        }
        d
    }

    /// Laplacian of the requested kind.
    pub fn laplacian(&self, kind: LaplacianKind) -> Result<Array2<f64>> {
        let n = self.n_vertices();
        match kind {
            LaplacianKind::Combinatorial => {
                let mut l = -self.adjacency.clone();
                for i in 0..n {
                    l[[i, i]] += self.degree[i];
                }
                Ok(l)
            }
            LaplacianKind::SymmetricNormalized => {
                let s = normalize_adjacency(self, Normalization::SymmetricDegree)?;
                Ok(Array2::eye(n) - s)
            }
            LaplacianKind::AugmentedSymmetricNormalized => {
                let s = normalize_adjacency(self, Normalization::AugmentedSymmetricDegree)?;
                Ok(Array2::eye(n) - s)
            }
        }
    }

    /// Symmetric normalized Laplacian where isolated vertices get an all-zero
    /// row and column, so signals on them are left untouched by `I - aL`.
    pub fn normalized_laplacian_lenient(&self) -> Array2<f64> {
        let n = self.n_vertices();
        let inv_sqrt: Array1<f64> = self
            .degree
            .mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            if self.degree[i] > 0.0 {
                l[[i, i]] = 1.0;
            }
            for j in 0..n {
                l[[i, j]] -= inv_sqrt[i] * self.adjacency[[i, j]] * inv_sqrt[j];
            }
        }
        l
    }
}

pub(crate) fn components_of(support: ArrayView2<f64>) -> Vec<Vec<usize>> {
    let n = support.nrows();
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if label[v] == usize::MAX && (support[[u, v]] != 0.0 || support[[v, u]] != 0.0) {
                    label[v] = id;
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Pairwise similarity between the rows of `features`.
pub fn similarity_matrix(features: ArrayView2<f64>, measure: SimilarityMeasure) -> Result<Array2<f64>> {
    let (n, f) = features.dim();
    if n < 2 || f < 1 {
        return Err(Error::InvalidParameter(format!(
            "similarity needs at least 2 rows and 1 column, got {n}x{f}"
        )));
    }
    if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Degenerate(format!("feature[{i},{j}] = {v} is not finite")));
    }
    let mut sim = match measure {
        SimilarityMeasure::Cosine => {
            let mut unit = features.to_owned();
            for (i, mut row) in unit.axis_iter_mut(Axis(0)).enumerate() {
                let norm = row.dot(&row).sqrt();
                if norm == 0.0 {
                    return Err(Error::Degenerate(format!(
                        "row {i} is the zero vector; cosine similarity is undefined"
                    )));
                }
                row /= norm;
            }
            let mut s = unit.dot(&unit.t());
            s.diag_mut().fill(1.0);
            s
        }
        SimilarityMeasure::Covariance => {
            let means = features.mean_axis(Axis(1)).expect("f >= 1");
            let centered = &features - &means.insert_axis(Axis(1));
            let denom = (f.max(2) - 1) as f64;
            centered.dot(&centered.t()) / denom
        }
        SimilarityMeasure::Rbf { gamma } => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "rbf gamma must be positive, got {gamma}"
                )));
            }
            let gram = features.dot(&features.t());
            let sq: Vec<f64> = (0..n).map(|i| gram[[i, i]]).collect();
            let mut s = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    let d2 = if i == j {
                        0.0
                    } else {
                        (sq[i] + sq[j] - 2.0 * gram[[i, j]]).max(0.0)
                    };
                    s[[i, j]] = (-gamma * d2).exp();
                }
            }
            s
        }
    };
    // Products are not guaranteed bitwise symmetric; mirror the upper triangle.
    for i in 0..n {
        for j in (i + 1)..n {
            sim[[j, i]] = sim[[i, j]];
        }
    }
    Ok(sim)
}

fn check_square_symmetric(sim: ArrayView2<f64>) -> Result<usize> {
    let (n, m) = sim.dim();
    if n != m {
        return Err(Error::DimensionMismatch(format!(
            "similarity must be square, got {n}x{m}"
        )));
    }
    let scale = sim.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (sim[[i, j]] - sim[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Contract(format!(
                    "similarity is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(n)
}

/// Keeps the `k` strongest off-diagonal similarities of every vertex,
/// symmetrizes by union, then drops weights below `min_edge_weight`
/// (nonpositive similarities never become edges).
///
/// Ties are broken towards the lower vertex index.
pub fn knn_sparsify_symmetrize(sim: ArrayView2<f64>, k: usize, min_edge_weight: f64) -> Result<Graph> {
    let n = check_square_symmetric(sim)?;
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < n, got k={k} with n={n}"
        )));
    }
    let mut keep = Array2::from_elem((n, n), false);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| {
            sim[[i, b]]
                .partial_cmp(&sim[[i, a]])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(k) {
            keep[[i, j]] = true;
            keep[[j, i]] = true;
        }
    }
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j && keep[[i, j]] {
                a[[i, j]] = sim[[i, j]];
            }
        }
    }
    Graph::from_adjacency(threshold(a, min_edge_weight))
}

/// Dense variant without neighbor selection: zero diagonal, then threshold.
pub fn threshold_similarity(sim: ArrayView2<f64>, min_edge_weight: f64) -> Result<Graph> {
    check_square_symmetric(sim)?;
    let mut a = sim.to_owned();
    a.diag_mut().fill(0.0);
    Graph::from_adjacency(threshold(a, min_edge_weight))
}

fn threshold(mut a: Array2<f64>, min_edge_weight: f64) -> Array2<f64> {
    a.mapv_inplace(|w| if w > 0.0 && w >= min_edge_weight { w } else { 0.0 });
    a
}

/// Turns a graph into a diffusion operator.
pub fn normalize_adjacency(g: &Graph, kind: Normalization) -> Result<Array2<f64>> {
    let n = g.n_vertices();
    let a = g.adjacency();
    match kind {
        Normalization::None => Ok(a.clone()),
        Normalization::Augmented => Ok(a + &Array2::<f64>::eye(n)),
        Normalization::SymmetricDegree => {
            if let Some(i) = g.degree().iter().position(|&d| d <= 0.0) {
                return Err(Error::Singular(format!(
                    "vertex {i} is isolated; D^-1/2 is undefined"
                )));
            }
            Ok(sym_scale(a, g.degree()))
        }
        Normalization::AugmentedSymmetricDegree => {
            let aug = a + &Array2::<f64>::eye(n);
            let deg = aug.sum_axis(Axis(1));
            Ok(sym_scale(&aug, &deg))
        }
    }
}

fn sym_scale(a: &Array2<f64>, degree: &Array1<f64>) -> Array2<f64> {
    let inv = degree.mapv(|d| 1.0 / d.sqrt());
    let n = a.nrows();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] = inv[i] * a[[i, j]] * inv[j];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            s[[j, i]] = s[[i, j]];
        }
    }
    s
}

/// Similarity, sparsification and normalization in one step.
pub fn build_graph(features: ArrayView2<f64>, config: &GraphBuildConfig) -> Result<(Graph, Array2<f64>)> {
    if !(config.min_edge_weight >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "min_edge_weight must be nonnegative, got {}",
            config.min_edge_weight
        )));
    }
    let sim = similarity_matrix(features, config.measure)?;
    let graph = match config.k {
        Some(k) => knn_sparsify_symmetrize(sim.view(), k, config.min_edge_weight)?,
        None => threshold_similarity(sim.view(), config.min_edge_weight)?,
    };
    let graph = if config.binarize {
        Graph::from_adjacency(graph.adjacency().mapv(|w| if w > 0.0 { 1.0 } else { 0.0 }))?
    } else {
        graph
    };
    let s = normalize_adjacency(&graph, config.normalization)?;
    Ok((graph, s))
}

/// Unit-weight 4-neighbor grid; vertex `(x, y)` has index `y * width + x`.
pub fn grid_graph(width: usize, height: usize) -> Graph {
    if width < 3 || height < 3 {
        log::warn!("grid_graph({width}, {height}) is below the 3x3 minimum of a proper grid");
    }
    let n = width * height;
    let mut a = Array2::zeros((n, n));
    for y in 0..height {
        for x in 0..width {
            let v = y * width + x;
            if x + 1 < width {
                a[[v, v + 1]] = 1.0;
                a[[v + 1, v]] = 1.0;
            }
            if y + 1 < height {
                a[[v, v + width]] = 1.0;
                a[[v + width, v]] = 1.0;
            }
        }
    }
    let degree = a.sum_axis(Axis(1));
    Graph { adjacency: a, degree }
}

/// Cycle on `n` vertices with unit weights.
pub fn ring_graph(n: usize) -> Graph {
    assert!(n >= 3, "ring_graph needs n >= 3, got {n}");
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        let j = (i + 1) % n;
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    let degree = a.sum_axis(Axis(1));
    Graph { adjacency: a, degree }
}

/// Path `0 - 1 - ... - (n-1)` with unit weights.
pub fn path_graph(n: usize) -> Graph {
    let mut a = Array2::zeros((n, n));
    for i in 1..n {
        a[[i - 1, i]] = 1.0;
        a[[i, i - 1]] = 1.0;
    }
    let degree = a.sum_axis(Axis(1));
    Graph { adjacency: a, degree }
}
