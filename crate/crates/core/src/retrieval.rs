//! Retrieval graphs built from auxiliary metadata, low-pass smoothing of
//! retrieval features, and ranking metrics.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_rows, Error, Result};
use crate::graph::Graph;
use crate::learners::cosine_similarity;

const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    /// Degrees.
    LatLon { lat: f64, lon: f64 },
    /// Meters.
    Planar { x: f64, y: f64 },
}

/// Great-circle distance in meters between two `(lat, lon)` pairs in degrees.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

impl Position {
    pub fn distance_m(&self, other: &Position) -> Result<f64> {
        match (*self, *other) {
            (Position::LatLon { lat, lon }, Position::LatLon { lat: lat2, lon: lon2 }) => {
                Ok(haversine_m(lat, lon, lat2, lon2))
            }
            (Position::Planar { x, y }, Position::Planar { x: x2, y: y2 }) => Ok((x - x2).hypot(y - y2)),
            _ => Err(Error::InvalidParameter("cannot mix geographic and planar positions".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemMeta {
    pub position: Option<Position>,
    pub sequence_id: Option<i64>,
    pub frame_index: Option<i64>,
    pub class_id: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceChannel {
    /// `exp(-γ·d)` for positions closer than `max_distance`.
    Metric,
    /// 1 iff the two items share a class id.
    SameClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VblGraphParams {
    pub gamma: f64,
    /// Meters.
    pub max_distance: f64,
    pub betas: Vec<f64>,
    pub alpha_sim: f64,
    pub filter_a: f64,
    pub filter_m: usize,
    pub distance: DistanceChannel,
}

impl Default for VblGraphParams {
    fn default() -> Self {
        VblGraphParams {
            gamma: 0.1,
            max_distance: 100.0,
            betas: vec![0.75, 0.0625, 0.015],
            alpha_sim: 0.66,
            filter_a: 0.1,
            filter_m: 20,
            distance: DistanceChannel::Metric,
        }
    }
}

impl VblGraphParams {
    pub fn k_max(&self) -> usize {
        self.betas.len()
    }

    fn validate(&self) -> Result<()> {
        if self.betas.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::InvalidParameter(format!("betas must be nonnegative, got {:?}", self.betas)));
        }
        if !(self.gamma >= 0.0 && self.alpha_sim >= 0.0 && self.max_distance >= 0.0) {
            return Err(Error::InvalidParameter("gamma, alpha and max_distance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub dist: bool,
    pub seq: bool,
    pub latent: bool,
}

impl ChannelSet {
    pub const ALL: ChannelSet = ChannelSet {
        dist: true,
        seq: true,
        latent: true,
    };
}

/// The three single-channel adjacencies. The latent channel is gated by
/// whichever of the other two channels have the metadata to be computed.
#[derive(Debug, Clone, PartialEq)]
pub struct VblChannels {
    pub dist: Option<Array2<f64>>,
    pub seq: Option<Array2<f64>>,
    pub latent: Array2<f64>,
}

fn dist_channel(items: &[ItemMeta], params: &VblGraphParams) -> Result<Option<Array2<f64>>> {
    let n = items.len();
    match params.distance {
        DistanceChannel::Metric => {
            if items.iter().any(|m| m.position.is_none()) {
                return Ok(None);
            }
            let mut a = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = items[i].position.unwrap().distance_m(&items[j].position.unwrap())?;
                    if d < params.max_distance {
                        let w = (-params.gamma * d).exp();
                        a[[i, j]] = w;
                        a[[j, i]] = w;
                    }
                }
            }
            Ok(Some(a))
        }
        DistanceChannel::SameClass => {
            if items.iter().any(|m| m.class_id.is_none()) {
                return Ok(None);
            }
            Ok(Some(Array2::from_shape_fn((n, n), |(i, j)| {
                if i != j && items[i].class_id == items[j].class_id {
                    1.0
                } else {
                    0.0
                }
            })))
        }
    }
}

fn seq_channel(items: &[ItemMeta], params: &VblGraphParams) -> Option<Array2<f64>> {
    if items.iter().any(|m| m.sequence_id.is_none() || m.frame_index.is_none()) {
        return None;
    }
    let n = items.len();
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j || items[i].sequence_id != items[j].sequence_id {
                continue;
            }
            let gap = (items[i].frame_index.unwrap() - items[j].frame_index.unwrap()).unsigned_abs() as usize;
            if (1..=params.k_max()).contains(&gap) {
                a[[i, j]] = params.betas[gap - 1];
            }
        }
    }
    Some(a)
}

pub fn vbl_channels(items: &[ItemMeta], features: ArrayView2<f64>, params: &VblGraphParams) -> Result<VblChannels> {
    params.validate()?;
    check_rows("features", items.len(), features.nrows())?;
    let dist = dist_channel(items, params)?;
    let seq = seq_channel(items, params);
    let sim = cosine_similarity(features, features)?;
    let n = items.len();
    let mut latent = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let gated = dist.as_ref().is_some_and(|a| a[[i, j]] > 0.0) || seq.as_ref().is_some_and(|a| a[[i, j]] > 0.0);
            if i != j && gated {
                latent[[i, j]] = params.alpha_sim * sim[[i, j]].max(0.0);
            }
        }
    }
    Ok(VblChannels { dist, seq, latent })
}

/// `A = A_dist + A_seq + A_latent_sim` over the enabled channels.
pub fn build_vbl_adjacency(
    items: &[ItemMeta],
    features: ArrayView2<f64>,
    params: &VblGraphParams,
    enabled: ChannelSet,
) -> Result<Graph> {
    let ch = vbl_channels(items, features, params)?;
    let n = items.len();
    let mut a = Array2::zeros((n, n));
    if enabled.dist {
        a += ch
            .dist
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("distance channel requested but metadata is missing".into()))?;
    }
    if enabled.seq {
        a += ch
            .seq
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("sequence channel requested but metadata is missing".into()))?;
    }
    if enabled.latent {
        a += &ch.latent;
    }
    Graph::from_adjacency(a)
}

/// `m` successive applications of `I - aL`, with `L` the normalized
/// Laplacian (isolated vertices keep their rows).
pub fn smooth_features(features: ArrayView2<f64>, graph: &Graph, a: f64, m: usize) -> Result<Array2<f64>> {
    if !(a > 0.0 && a <= 0.5) {
        return Err(Error::InvalidParameter(format!("a must lie in (0, 0.5], got {a}")));
    }
    check_rows("features", graph.n_vertices(), features.nrows())?;
    let l = graph.normalized_laplacian_lenient();
    let mut x = features.to_owned();
    for _ in 0..m {
        x = &x - &(l.dot(&x) * a);
    }
    Ok(x)
}

/// Support indices ranked by descending cosine similarity, ties by index.
/// `top_k = None` ranks the whole support.
pub fn retrieve(query: ArrayView2<f64>, support: ArrayView2<f64>, top_k: Option<usize>) -> Result<Vec<Vec<usize>>> {
    if support.nrows() == 0 {
        return Err(Error::InvalidParameter("empty support set".into()));
    }
    let sim = cosine_similarity(query, support)?;
    let k = top_k.unwrap_or(support.nrows()).min(support.nrows());
    Ok((0..sim.nrows())
        .into_par_iter()
        .map(|q| {
            let row = sim.row(q);
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&i, &j| row[j].total_cmp(&row[i]).then(i.cmp(&j)));
            order.truncate(k);
            order
        })
        .collect())
}

/// `Σ_k P(k)·rel(k) / |relevant|` over the given ranking.
pub fn average_precision(ranking: &[usize], relevant: &HashSet<usize>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::InvalidParameter("average precision needs a nonempty relevant set".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, item) in ranking.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Mean AP over queries with a nonempty relevant set.
pub fn mean_average_precision(rankings: &[Vec<usize>], relevance: &[HashSet<usize>]) -> Result<f64> {
    check_rows("relevance sets", rankings.len(), relevance.len())?;
    let aps = rankings
        .iter()
        .zip(relevance)
        .filter(|(_, r)| !r.is_empty())
        .map(|(rank, rel)| average_precision(rank, rel))
        .collect::<Result<Vec<_>>>()?;
    if aps.is_empty() {
        return Err(Error::InvalidParameter("no query has a relevant item".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    pub median_error_m: f64,
    /// Fraction of queries with error strictly below the threshold.
    pub fraction_under: f64,
    pub threshold_m: f64,
    pub errors_m: Vec<f64>,
}

/// Errors between each query's true position and its top-1 retrieved pose.
pub fn localization_metrics(
    query: &[Option<Position>],
    retrieved: &[Option<Position>],
    threshold_m: f64,
) -> Result<LocalizationMetrics> {
    check_rows("retrieved poses", query.len(), retrieved.len())?;
    if query.is_empty() {
        return Err(Error::InvalidParameter("no queries".into()));
    }
    let errors_m = query
        .iter()
        .zip(retrieved)
        .enumerate()
        .map(|(i, (q, r))| match (q, r) {
            (Some(q), Some(r)) => q.distance_m(r),
            _ => Err(Error::InvalidParameter(format!("query {i} is missing a position"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sorted = errors_m.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median_error_m = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let under = errors_m.iter().filter(|&&e| e < threshold_m).count();
    Ok(LocalizationMetrics {
        median_error_m,
        fraction_under: under as f64 / n as f64,
        threshold_m,
        errors_m,
    })
}
