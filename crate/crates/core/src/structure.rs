//! Graph translations, strided vertex downsampling and embeddings of graphs
//! into the integer lattice.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_rows, Error, Result};
use crate::graph::Graph;
use crate::rng::{derive_seed, rng_from_seed};

/// Default vertex cap for the exponential translation search.
pub const DEFAULT_TRANSLATION_CAP: usize = 64;

/// Partial vertex map `φ: U → V` stored as `(v, φ(v))` pairs sorted by `v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Translation {
    pub mapping: Vec<(usize, usize)>,
    pub n_vertices: usize,
}

impl Translation {
    pub fn new(n_vertices: usize, mut mapping: Vec<(usize, usize)>) -> Self {
        mapping.sort_unstable();
        Translation { mapping, n_vertices }
    }

    /// `|V| - |U|`
    pub fn loss(&self) -> usize {
        self.n_vertices - self.mapping.len()
    }

    pub fn image_of(&self, v: usize) -> Option<usize> {
        self.mapping
            .binary_search_by_key(&v, |&(s, _)| s)
            .ok()
            .map(|i| self.mapping[i].1)
    }

    pub fn is_aligned_with(&self, other: &Translation) -> bool {
        self.mapping.iter().any(|&(v, w)| other.image_of(v) == Some(w))
    }

    pub fn inverse(&self) -> Translation {
        Translation::new(self.n_vertices, self.mapping.iter().map(|&(v, w)| (w, v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// A vertex index is out of range or mapped twice.
    Malformed,
    Injective,
    EdgeConstrained,
    NeighborhoodPreserving,
}

/// First violated axiom of `mapping`, or `None` for a translation.
pub fn check_translation(graph: &Graph, mapping: &[(usize, usize)]) -> Option<Violation> {
    let n = graph.n_vertices();
    let mut src = vec![false; n];
    let mut dst = vec![false; n];
    for &(v, w) in mapping {
        if v >= n || w >= n || src[v] {
            return Some(Violation::Malformed);
        }
        src[v] = true;
    }
    for &(_, w) in mapping {
        if dst[w] {
            return Some(Violation::Injective);
        }
        dst[w] = true;
    }
    if mapping.iter().any(|&(v, w)| !graph.has_edge(v, w)) {
        return Some(Violation::EdgeConstrained);
    }
    for (i, &(v, w)) in mapping.iter().enumerate() {
        for &(v2, w2) in &mapping[i + 1..] {
            if graph.has_edge(v, v2) != graph.has_edge(w, w2) {
                return Some(Violation::NeighborhoodPreserving);
            }
        }
    }
    None
}

pub fn is_translation(graph: &Graph, mapping: &[(usize, usize)]) -> bool {
    check_translation(graph, mapping).is_none()
}

/// Fixed-width bitset over candidate pairs.
#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn empty(len: usize) -> Self {
        Bits(vec![0; len.div_ceil(64)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn unset(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn and_not(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & !b).collect())
    }

    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * 64 + b)
            })
        })
    }
}

/// Pairs `(v, w)` with `(v, w) ∈ E` and the compatibility relation between
/// them: two pairs can coexist in one translation iff sources and targets
/// differ and adjacency of sources matches adjacency of targets.
struct Compatibility {
    pairs: Vec<(usize, usize)>,
    adj: Vec<Bits>,
}

impl Compatibility {
    fn new(graph: &Graph) -> Self {
        let n = graph.n_vertices();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|v| graph.neighbors(v).into_iter().filter(move |&w| w != v).map(move |w| (v, w)))
            .collect();
        let m = pairs.len();
        let mut adj = vec![Bits::empty(m); m];
        for i in 0..m {
            let (v, w) = pairs[i];
            for j in (i + 1)..m {
                let (v2, w2) = pairs[j];
                if v != v2 && w != w2 && graph.has_edge(v, v2) == graph.has_edge(w, w2) {
                    adj[i].set(j);
                    adj[j].set(i);
                }
            }
        }
        Compatibility { pairs, adj }
    }

    /// Bron-Kerbosch with pivoting; reports every maximal clique.
    fn maximal_cliques(&self, r: &mut Vec<usize>, mut p: Bits, mut x: Bits, out: &mut Vec<Vec<usize>>) {
        if p.is_empty() {
            if x.is_empty() {
                out.push(r.clone());
            }
            return;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .max_by_key(|&u| p.and(&self.adj[u]).count())
            .expect("P is nonempty");
        let candidates: Vec<usize> = p.and_not(&self.adj[pivot]).iter().collect();
        for v in candidates {
            r.push(v);
            self.maximal_cliques(r, p.and(&self.adj[v]), x.and(&self.adj[v]), out);
            r.pop();
            p.unset(v);
            x.set(v);
        }
    }
}

/// All minimal translations: translations with no aligned translation of
/// strictly smaller loss, ordered by `(loss, mapping)`.
///
/// A translation is a clique of compatible pairs, so a minimal translation is
/// a maximal clique whose size equals, for each of its pairs, the largest
/// clique containing that pair.
pub fn find_minimal_translations(graph: &Graph, max_vertices: usize) -> Result<Vec<Translation>> {
    let n = graph.n_vertices();
    if n > max_vertices {
        return Err(Error::Refused(format!(
            "translation search is exponential; the graph has {n} vertices, above the cap of {max_vertices}. \
             Raise the cap explicitly or search a subgraph"
        )));
    }
    let comp = Compatibility::new(graph);
    let m = comp.pairs.len();
    // Independent branches: clique containing pair i with no pair below i.
    let cliques: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut p = Bits::empty(m);
            let mut x = Bits::empty(m);
            for j in comp.adj[i].iter() {
                if j > i {
                    p.set(j);
                } else {
                    x.set(j);
                }
            }
            let mut out = Vec::new();
            comp.maximal_cliques(&mut vec![i], p, x, &mut out);
            out
        })
        .collect();
    let mut best = vec![0usize; m];
    for c in &cliques {
        for &p in c {
            best[p] = best[p].max(c.len());
        }
    }
    let minimal: BTreeSet<(usize, Translation)> = cliques
        .into_iter()
        .filter(|c| c.iter().all(|&p| best[p] == c.len()))
        .map(|c| {
            let t = Translation::new(n, c.iter().map(|&p| comp.pairs[p]).collect());
            (t.loss(), t)
        })
        .collect();
    Ok(minimal.into_iter().map(|(_, t)| t).collect())
}

/// `out[φ(v)] = s[v]` on the image; other vertices receive `fill`.
pub fn translate_signal(signal: ArrayView1<f64>, translation: &Translation, fill: f64) -> Result<Array1<f64>> {
    check_rows("signal", translation.n_vertices, signal.len())?;
    let mut out = Array1::from_elem(signal.len(), fill);
    for &(v, w) in &translation.mapping {
        out[w] = signal[v];
    }
    Ok(out)
}

/// Fixpoint of: add every vertex that is farther than `r - 1` hops from all
/// kept vertices but within `r` hops of one. Candidates are visited in index
/// order and admitted one at a time. Components not containing `v0` are
/// seeded with their smallest vertex.
pub fn downsample_vertices(graph: &Graph, r: usize, v0: usize) -> Result<Vec<usize>> {
    let n = graph.n_vertices();
    if r < 2 {
        return Err(Error::InvalidParameter(format!("stride must be at least 2, got {r}")));
    }
    if v0 >= n {
        return Err(Error::InvalidParameter(format!("seed vertex {v0} out of range for {n} vertices")));
    }
    let hops: Vec<Vec<Option<usize>>> = (0..n).map(|v| graph.hop_distances(v)).collect();
    let within = |a: usize, b: usize, k: usize| hops[a][b].is_some_and(|h| h <= k);
    let mut kept = Vec::new();
    for comp in graph.components() {
        let seed = if comp.contains(&v0) { v0 } else { comp[0] };
        if comp.len() < n {
            log::debug!("downsampling component of {} vertices from seed {seed}", comp.len());
        }
        let mut mine = vec![seed];
        loop {
            let mut added = false;
            for &u in &comp {
                let blocked = mine.iter().any(|&k| within(k, u, r - 1));
                if !blocked && mine.iter().any(|&k| within(k, u, r)) {
                    mine.push(u);
                    added = true;
                }
            }
            if !added {
                break;
            }
        }
        kept.extend(mine);
    }
    kept.sort_unstable();
    Ok(kept)
}

fn all_pairs_distances(graph: &Graph) -> Result<Array2<f64>> {
    let d = graph.shortest_path_lengths();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Disconnected("embedding cost needs a connected graph".into()));
    }
    Ok(d)
}

fn cost_with(dist: &Array2<f64>, coords: ArrayView2<f64>, alpha: f64) -> f64 {
    let n = coords.nrows();
    let mut c = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let l1: f64 = coords.row(i).iter().zip(coords.row(j)).map(|(a, b)| (a - b).abs()).sum();
            c += (alpha * l1 - dist[[i, j]]).abs();
        }
    }
    c
}

/// `Σ_{v<v'} |α‖φ(v) - φ(v')‖₁ - d_G(v, v')|` with edge weights as lengths.
pub fn embedding_cost(graph: &Graph, coords: ArrayView2<f64>, alpha: f64) -> Result<f64> {
    check_rows("embedding", graph.n_vertices(), coords.nrows())?;
    Ok(cost_with(&all_pairs_distances(graph)?, coords, alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// `n×d` lattice coordinates.
    pub coords: Array2<i64>,
    pub alpha: f64,
    pub cost: f64,
}

impl Embedding {
    pub fn d(&self) -> usize {
        self.coords.ncols()
    }

    pub fn as_f64(&self) -> Array2<f64> {
        self.coords.mapv(|v| v as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub d: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub beta0: f64,
    pub gamma: f64,
    /// Independent descents from fresh random embeddings; the lowest
    /// rounded cost wins.
    pub restarts: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            d: 2,
            alpha: 1.0,
            iterations: 1500,
            beta0: 1e-6,
            gamma: 1.03,
            restarts: 10,
        }
    }
}

/// Sign with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Subgradient of `c_α` summed over ordered pairs, with respect to every
/// coordinate.
fn cost_subgradient(dist: &Array2<f64>, x: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut g = Array2::zeros((n, d));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut l1 = 0.0;
            for k in 0..d {
                l1 += (x[[i, k]] - x[[j, k]]).abs();
            }
            let s = sign(alpha * l1 - dist[[i, j]]);
            if s == 0.0 {
                continue;
            }
            for k in 0..d {
                let diff = x[[i, k]] - x[[j, k]];
                if diff != 0.0 {
                    let v = 2.0 * s * alpha * sign(diff);
                    g[[i, k]] += v;
                    g[[j, k]] -= v;
                }
            }
        }
    }
    g
}

/// Nearest-integer rounding; a vertex landing on an occupied point moves to
/// the nearest free lattice point (L1 rings, then lexicographic order).
pub fn round_to_lattice(x: ArrayView2<f64>) -> Array2<i64> {
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, d));
    let mut taken = std::collections::HashSet::new();
    for i in 0..n {
        let base: Vec<i64> = x.row(i).iter().map(|v| v.round() as i64).collect();
        let point = (0..)
            .find_map(|radius: i64| {
                let mut ring: Vec<Vec<i64>> = l1_sphere(d, radius)
                    .into_iter()
                    .map(|off| base.iter().zip(&off).map(|(b, o)| b + o).collect())
                    .collect();
                ring.sort_by(|a: &Vec<i64>, b: &Vec<i64>| {
                    let da: f64 = a.iter().zip(x.row(i)).map(|(p, v)| (*p as f64 - v).abs()).sum();
                    let db: f64 = b.iter().zip(x.row(i)).map(|(p, v)| (*p as f64 - v).abs()).sum();
                    da.total_cmp(&db).then_with(|| a.cmp(b))
                });
                ring.into_iter().find(|p| !taken.contains(p))
            })
            .expect("the lattice is infinite");
        for (k, &v) in point.iter().enumerate() {
            out[[i, k]] = v;
        }
        taken.insert(point);
    }
    out
}

/// Integer offsets with L1 norm exactly `radius`.
fn l1_sphere(d: usize, radius: i64) -> Vec<Vec<i64>> {
    if d == 1 {
        return if radius == 0 { vec![vec![0]] } else { vec![vec![-radius], vec![radius]] };
    }
    let mut out = Vec::new();
    for first in -radius..=radius {
        for mut rest in l1_sphere(d - 1, radius - first.abs()) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Subgradient descent on `(c_α + β_i·Σ_v d₁(φ(v), Z^d)) / (1 + β_i)` with
/// `β_i = γ·β_{i-1}`, followed by rounding. Step sizes decay as
/// `step₀/(1 + t/τ)` with `step₀ = 0.05·diameter` and `τ = K/4`; the
/// cost subgradient is averaged over the other vertices. Restart `r` draws
/// its initial embedding from `derive_seed(seed, r)`.
pub fn optimize_embedding(graph: &Graph, config: &EmbedConfig, seed: u64) -> Result<Embedding> {
    if config.iterations == 0 || config.restarts == 0 {
        return Err(Error::InvalidParameter("iterations and restarts must be at least 1".into()));
    }
    if config.d == 0 || !(config.alpha > 0.0) {
        return Err(Error::InvalidParameter("dimension and alpha must be positive".into()));
    }
    let dist = all_pairs_distances(graph)?;
    let runs: Vec<Embedding> = (0..config.restarts)
        .into_par_iter()
        .map(|r| descend(&dist, config, derive_seed(seed, r as u64)))
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, e| if e.cost < best.cost { e } else { best })
        .expect("at least one restart"))
}

fn descend(dist: &Array2<f64>, config: &EmbedConfig, seed: u64) -> Embedding {
    let n = dist.nrows();
    let diameter = dist.iter().fold(0.0_f64, |a, &b| a.max(b)).max(1.0);
    let mut rng = rng_from_seed(seed);
    let side = diameter / config.alpha;
    let mut x = Array2::from_shape_simple_fn((n, config.d), || rng.random_range(0.0..side));
    let step0 = 0.05 * diameter;
    let tau = config.iterations as f64 / 4.0;
    let scale = 1.0 / (2.0 * (n.max(2) - 1) as f64);
    let mut beta = config.beta0;
    for t in 0..config.iterations {
        beta *= config.gamma;
        let mut g = cost_subgradient(dist, &x, config.alpha);
        g *= scale;
        g.zip_mut_with(&x, |gv, &xv| *gv += beta * sign(xv - xv.round()));
        g /= 1.0 + beta;
        let step = step0 / (1.0 + t as f64 / tau);
        x.scaled_add(-step, &g);
    }
    let coords = round_to_lattice(x.view());
    let cost = cost_with(dist, coords.mapv(|v| v as f64).view(), config.alpha);
    Embedding {
        coords,
        alpha: config.alpha,
        cost,
    }
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(d - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, d - 1);
            out.push(q);
        }
    }
    out
}

/// Whether `a` maps onto `b` by a signed coordinate permutation and a
/// translation, i.e. an L1 isometry of `Z^d`.
pub fn is_lattice_isometry(a: ArrayView2<i64>, b: ArrayView2<i64>) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let (n, d) = a.dim();
    if n == 0 {
        return true;
    }
    for perm in permutations(d) {
        for signs in 0..(1u32 << d) {
            let map = |row: usize, k: usize| {
                let v = a[[row, perm[k]]];
                if signs >> k & 1 == 1 {
                    -v
                } else {
                    v
                }
            };
            let ok = (0..n).all(|i| (0..d).all(|k| map(i, k) - map(0, k) == b[[i, k]] - b[[0, k]]));
            if ok {
                return true;
            }
        }
    }
    false
}

/// Natural grid embedding: vertex `y·width + x` at `(x, y)`.
pub fn natural_grid_embedding(width: usize, height: usize) -> Array2<i64> {
    Array2::from_shape_fn((width * height, 2), |(v, k)| if k == 0 { (v % width) as i64 } else { (v / width) as i64 })
}

/// Two-slices graph over `{1,2,3} × {1,h}` with its natural embedding.
/// Vertex `(x, row)` has index `x - 1 + 3·row`; the two rows sit `h` apart.
pub fn two_slices_graph(h: f64) -> Result<(Graph, Array2<f64>)> {
    if !(h >= 2.0) {
        return Err(Error::InvalidParameter(format!("two-slices graph needs h >= 2, got {h}")));
    }
    let edges = [(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (0, 3, h), (2, 5, h)];
    let g = Graph::from_edges(6, &edges)?;
    let coords = Array2::from_shape_fn((6, 2), |(v, k)| if k == 0 { (v % 3 + 1) as f64 } else { (v / 3) as f64 * h });
    Ok((g, coords))
}
