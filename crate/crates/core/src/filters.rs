//! Graph filter registry.
//!
//! A filter is either a spectral response `h(λ)` applied in the Fourier
//! domain, a polynomial/rational diffusion operator applied directly to the
//! signal, or both. Where both forms exist they agree to round-off.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_rows, Error, Result};
use crate::graph::{normalize_adjacency, Graph, LaplacianKind, Normalization};
use crate::spectral::{eigendecompose, symmetrize, SpectralDecomposition};

/// Slack accepted on eigenvalues just outside a filter's domain.
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SpectralResponseFilter {
    /// `(1 - λ̃)^m` over augmented-Laplacian eigenvalues.
    Sgc { m: u32 },
    /// `1 / (1 + αλ)`
    Tikhonov { alpha: f64 },
    /// `(1 - aλ)^m`
    VblPoly { a: f64, m: u32 },
    /// `((λ_max - λ) / λ_max)^m`
    BalcilarLowpass { m: u32 },
    /// `exp(-α (c·λ_max - λ)²)` with `c ∈ {0.25, 0.5, 0.75}`.
    BalcilarBand { alpha: f64, center: f64 },
    /// `α / (α(1 - λ̃) + λ̃)` over augmented-Laplacian eigenvalues.
    PageRank { alpha: f64 },
    /// Smooth low-pass with cutoff `τ` on `λ / λ_max`.
    Simoncelli { tau: f64 },
    /// Diagonal response by frequency rank (1-based): gain 1 up to `f1`,
    /// `mid_gain` up to `f2`, 0 afterwards.
    BandIndices { f1: usize, f2: usize, mid_gain: f64 },
}

impl SpectralResponseFilter {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            SpectralResponseFilter::Sgc { .. } | SpectralResponseFilter::BalcilarLowpass { .. } => Ok(()),
            SpectralResponseFilter::Tikhonov { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                bad(format!("tikhonov alpha must be positive, got {alpha}"))
            }
            SpectralResponseFilter::VblPoly { a, .. } if !(a > 0.0 && a <= 0.5) => {
                bad(format!("vbl a must lie in (0, 0.5], got {a}"))
            }
            SpectralResponseFilter::BalcilarBand { alpha, center } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    bad(format!("balcilar_band alpha must be positive, got {alpha}"))
                } else if ![0.25, 0.5, 0.75].contains(&center) {
                    bad(format!("balcilar_band center must be 0.25, 0.5 or 0.75, got {center}"))
                } else {
                    Ok(())
                }
            }
            SpectralResponseFilter::PageRank { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                bad(format!("page alpha must lie in (0, 1], got {alpha}"))
            }
            SpectralResponseFilter::Simoncelli { tau } if !(0.0..=1.0).contains(&tau) => {
                bad(format!("simoncelli tau must lie in [0, 1], got {tau}"))
            }
            SpectralResponseFilter::BandIndices { f1, f2, mid_gain } => {
                if f1 > f2 {
                    bad(format!("band requires f1 <= f2, got f1={f1} f2={f2}"))
                } else if !mid_gain.is_finite() {
                    bad(format!("band mid gain must be finite, got {mid_gain}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Laplacian the filter is defined over, when it is not free to choose.
    pub fn expected_kind(&self) -> Option<LaplacianKind> {
        match self {
            SpectralResponseFilter::Sgc { .. } | SpectralResponseFilter::PageRank { .. } => {
                Some(LaplacianKind::AugmentedSymmetricNormalized)
            }
            _ => None,
        }
    }

    pub fn is_index_based(&self) -> bool {
        matches!(self, SpectralResponseFilter::BandIndices { .. })
    }

    /// Whether `0 <= h <= 1` holds on the whole domain.
    pub fn is_bounded_low_pass(&self) -> bool {
        match *self {
            SpectralResponseFilter::Sgc { m } => m % 2 == 0,
            SpectralResponseFilter::BandIndices { mid_gain, .. } => (0.0..=1.0).contains(&mid_gain),
            _ => true,
        }
    }

    fn domain_error(&self, value: f64) -> Error {
        Error::Domain {
            filter: self.to_string(),
            value,
        }
    }

    /// Response at a single eigenvalue. `lambda_max` is the largest
    /// eigenvalue of the operator the filter is applied on.
    pub fn response(&self, lambda: f64, lambda_max: f64) -> Result<f64> {
        if !lambda.is_finite() || lambda < -DOMAIN_SLACK {
            return Err(self.domain_error(lambda));
        }
        let lam = lambda.max(0.0);
        let above_max = lambda > lambda_max * (1.0 + DOMAIN_SLACK) + DOMAIN_SLACK;
        let h = match *self {
            SpectralResponseFilter::Sgc { m } => (1.0 - lam).powi(m as i32),
            SpectralResponseFilter::Tikhonov { alpha } => 1.0 / (1.0 + alpha * lam),
            SpectralResponseFilter::VblPoly { a, m } => (1.0 - a * lam).powi(m as i32),
            SpectralResponseFilter::BalcilarLowpass { m } => {
                if above_max || !(lambda_max > 0.0) {
                    return Err(self.domain_error(lambda));
                }
                ((lambda_max - lam.min(lambda_max)) / lambda_max).powi(m as i32)
            }
            SpectralResponseFilter::BalcilarBand { alpha, center } => {
                if above_max {
                    return Err(self.domain_error(lambda));
                }
                (-alpha * (center * lambda_max - lam).powi(2)).exp()
            }
            SpectralResponseFilter::PageRank { alpha } => {
                let denom = alpha * (1.0 - lam) + lam;
                if denom <= 0.0 {
                    return Err(self.domain_error(lambda));
                }
                alpha / denom
            }
            SpectralResponseFilter::Simoncelli { tau } => {
                if above_max {
                    return Err(self.domain_error(lambda));
                }
                let x = if lambda_max > 0.0 { (lam / lambda_max).min(1.0) } else { 0.0 };
                simoncelli(x, tau)
            }
            SpectralResponseFilter::BandIndices { .. } => {
                return Err(Error::InvalidParameter(format!(
                    "{self} is defined on frequency ranks, not eigenvalues"
                )))
            }
        };
        Ok(h)
    }
}

/// Continuous Simoncelli kernel on normalized frequency `x ∈ [0, 1]`.
fn simoncelli(x: f64, tau: f64) -> f64 {
    let half = 0.5 * tau;
    if x <= half + 1e-12 {
        1.0
    } else if x <= tau {
        (std::f64::consts::FRAC_PI_2 * (x / half).log2()).cos()
    } else {
        0.0
    }
}

/// Evaluates `h` at every entry of `lambdas` (ascending). Rank-based
/// filters use the position in the vector.
pub fn evaluate_response(
    filter: &SpectralResponseFilter,
    lambdas: ArrayView1<f64>,
    lambda_max: f64,
) -> Result<Array1<f64>> {
    filter.validate()?;
    if let SpectralResponseFilter::BandIndices { f1, f2, mid_gain } = *filter {
        let n = lambdas.len();
        if f2 > n {
            return Err(Error::InvalidParameter(format!(
                "band f2={f2} exceeds the {n} available frequencies"
            )));
        }
        return Ok(Array1::from_shape_fn(n, |i| {
            let rank = i + 1;
            if rank <= f1 {
                1.0
            } else if rank <= f2 {
                mid_gain
            } else {
                0.0
            }
        }));
    }
    lambdas.iter().map(|&l| filter.response(l, lambda_max)).collect::<Result<Vec<_>>>().map(Array1::from)
}

/// Exact application `F · diag(h(λ)) · Fᵀ · s`.
pub fn apply_spectral(
    filter: &SpectralResponseFilter,
    signal: ArrayView2<f64>,
    dec: &SpectralDecomposition,
) -> Result<Array2<f64>> {
    check_kind(filter, dec)?;
    let h = evaluate_response(filter, dec.eigenvalues().view(), dec.lambda_max())?;
    dec.apply_response(h.view(), signal)
}

fn check_kind(filter: &SpectralResponseFilter, dec: &SpectralDecomposition) -> Result<()> {
    match filter.expected_kind() {
        Some(kind) if kind != dec.kind() => Err(Error::Contract(format!(
            "{filter} expects a {kind:?} decomposition, got {:?}",
            dec.kind()
        ))),
        _ => Ok(()),
    }
}

/// Symmetric diffusion operator applied `power` times.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionFilter {
    operator: Array2<f64>,
    power: usize,
}

impl DiffusionFilter {
    pub fn new(operator: Array2<f64>, power: usize) -> Result<Self> {
        let (n, m) = operator.dim();
        if n != m {
            return Err(Error::DimensionMismatch(format!("operator must be square, got {n}x{m}")));
        }
        let scale = operator.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                if (operator[[i, j]] - operator[[j, i]]).abs() > 1e-10 * scale {
                    return Err(Error::Contract(format!("diffusion operator is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(DiffusionFilter { operator, power })
    }

    pub fn operator(&self) -> &Array2<f64> {
        &self.operator
    }

    pub fn power(&self) -> usize {
        self.power
    }

    /// `S^m` as a dense matrix, by repeated squaring.
    pub fn materialize(&self) -> Array2<f64> {
        matrix_power(&self.operator, self.power)
    }
}

/// `S^m · s` computed by `m` successive products.
pub fn apply_diffusion(filter: &DiffusionFilter, signal: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_rows("signal", filter.operator.nrows(), signal.nrows())?;
    let mut out = signal.to_owned();
    for _ in 0..filter.power {
        out = filter.operator.dot(&out);
    }
    Ok(out)
}

pub(crate) fn matrix_power(s: &Array2<f64>, mut m: usize) -> Array2<f64> {
    let n = s.nrows();
    let mut result = Array2::eye(n);
    let mut base = s.clone();
    let mut first = true;
    while m > 0 {
        if m & 1 == 1 {
            result = if first { base.clone() } else { result.dot(&base) };
            first = false;
        }
        m >>= 1;
        if m > 0 {
            base = base.dot(&base);
        }
    }
    result
}

/// Chebyshev coefficients `c_0..=c_order` of `h` on `[0, lambda_max]`,
/// from Chebyshev-Gauss quadrature with `2·order` nodes.
pub fn chebyshev_coefficients<F>(h: F, lambda_max: f64, order: usize) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    if order < 1 {
        return Err(Error::InvalidParameter("chebyshev order must be >= 1".into()));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let nodes = 2 * order;
    let samples: Vec<(f64, f64)> = (0..nodes)
        .map(|j| {
            let theta = std::f64::consts::PI * (j as f64 + 0.5) / nodes as f64;
            let lam = 0.5 * lambda_max * (theta.cos() + 1.0);
            h(lam).map(|v| (theta, v))
        })
        .collect::<Result<_>>()?;
    Ok((0..=order)
        .map(|k| {
            2.0 / nodes as f64 * samples.iter().map(|&(t, v)| v * (k as f64 * t).cos()).sum::<f64>()
        })
        .collect())
}

/// Applies the truncated expansion `c_0/2 + Σ c_k T_k(2L/λ_max - I)` to `signal`.
pub fn apply_chebyshev_coefficients(
    coeffs: &[f64],
    signal: ArrayView2<f64>,
    laplacian: ArrayView2<f64>,
    lambda_max: f64,
) -> Result<Array2<f64>> {
    check_rows("signal", laplacian.nrows(), signal.nrows())?;
    let shifted = |x: &Array2<f64>| -> Array2<f64> { laplacian.dot(x) * (2.0 / lambda_max) - x };
    let t0 = signal.to_owned();
    let mut out = &t0 * (0.5 * coeffs[0]);
    if coeffs.len() == 1 {
        return Ok(out);
    }
    let mut prev = t0;
    let mut cur = shifted(&prev);
    out.scaled_add(coeffs[1], &cur);
    for &c in &coeffs[2..] {
        let next = shifted(&cur) * 2.0 - &prev;
        out.scaled_add(c, &next);
        prev = cur;
        cur = next;
    }
    Ok(out)
}

/// Polynomial approximation of `filter` of the given order.
pub fn apply_chebyshev(
    filter: &SpectralResponseFilter,
    signal: ArrayView2<f64>,
    laplacian: ArrayView2<f64>,
    lambda_max: f64,
    order: usize,
) -> Result<Array2<f64>> {
    filter.validate()?;
    let coeffs = chebyshev_coefficients(|l| filter.response(l, lambda_max), lambda_max, order)?;
    apply_chebyshev_coefficients(&coeffs, signal, laplacian, lambda_max)
}

fn solve(system: &Array2<f64>, rhs: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = system.nrows();
    let a = DMatrix::from_fn(n, n, |i, j| system[[i, j]]);
    let b = DMatrix::from_fn(n, rhs.ncols(), |i, j| rhs[[i, j]]);
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("linear system has no unique solution".into()))?;
    Ok(Array2::from_shape_fn((n, rhs.ncols()), |(i, j)| x[(i, j)]))
}

fn pagerank_system(s_aug: ArrayView2<f64>, alpha: f64) -> Result<Array2<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("page alpha must lie in (0, 1], got {alpha}")));
    }
    let (n, m) = s_aug.dim();
    if n != m {
        return Err(Error::DimensionMismatch(format!("operator must be square, got {n}x{m}")));
    }
    Ok(Array2::<f64>::eye(n) - &(&s_aug * (1.0 - alpha)))
}

/// `α (I - (1-α) S̃)^{-1} · signal`, by solving the linear system.
pub fn pagerank_apply(s_aug: ArrayView2<f64>, alpha: f64, signal: ArrayView2<f64>) -> Result<Array2<f64>> {
    let system = pagerank_system(s_aug, alpha)?;
    check_rows("signal", system.nrows(), signal.nrows())?;
    Ok(solve(&system, signal)? * alpha)
}

/// Dense PageRank diffusion matrix `α (I - (1-α) S̃)^{-1}`.
pub fn pagerank_diffusion_matrix(s_aug: ArrayView2<f64>, alpha: f64) -> Result<Array2<f64>> {
    let system = pagerank_system(s_aug, alpha)?;
    let n = system.nrows();
    let mut m = solve(&system, Array2::eye(n).view())? * alpha;
    symmetrize(&mut m);
    Ok(m)
}

/// Diffusion form of a filter on `graph`, when one exists. `kind` selects
/// the Laplacian for filters that are not tied to the augmented graph.
pub fn diffusion_form(
    filter: &SpectralResponseFilter,
    graph: &Graph,
    kind: LaplacianKind,
) -> Result<Option<DiffusionFilter>> {
    filter.validate()?;
    let n = graph.n_vertices();
    let form = match *filter {
        SpectralResponseFilter::Sgc { m } => Some(DiffusionFilter::new(
            normalize_adjacency(graph, Normalization::AugmentedSymmetricDegree)?,
            m as usize,
        )?),
        SpectralResponseFilter::PageRank { alpha } => {
            let s = normalize_adjacency(graph, Normalization::AugmentedSymmetricDegree)?;
            Some(DiffusionFilter::new(pagerank_diffusion_matrix(s.view(), alpha)?, 1)?)
        }
        SpectralResponseFilter::VblPoly { a, m } => {
            let l = graph.laplacian(kind)?;
            Some(DiffusionFilter::new(Array2::<f64>::eye(n) - &(l * a), m as usize)?)
        }
        SpectralResponseFilter::Tikhonov { alpha } => {
            let l = graph.laplacian(kind)?;
            let system = Array2::<f64>::eye(n) + &(l * alpha);
            let mut inv = solve(&system, Array2::eye(n).view())?;
            symmetrize(&mut inv);
            Some(DiffusionFilter::new(inv, 1)?)
        }
        _ => None,
    };
    Ok(form)
}

/// Dense `n×n` operator `H` with `filtered = H · s`. Uses the diffusion form
/// when available and the eigendecomposition otherwise.
pub fn filter_operator(filter: &SpectralResponseFilter, graph: &Graph, kind: LaplacianKind) -> Result<Array2<f64>> {
    if let Some(form) = diffusion_form(filter, graph, kind)? {
        return Ok(form.materialize());
    }
    let kind = filter.expected_kind().unwrap_or(kind);
    let dec = eigendecompose(graph.laplacian(kind)?.view(), kind)?;
    let h = evaluate_response(filter, dec.eigenvalues().view(), dec.lambda_max())?;
    dec.operator(h.view())
}

impl fmt::Display for SpectralResponseFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SpectralResponseFilter::Sgc { m } => write!(f, "sgc{{m={m}}}"),
            SpectralResponseFilter::Tikhonov { alpha } => write!(f, "tikhonov{{alpha={alpha}}}"),
            SpectralResponseFilter::VblPoly { a, m } => write!(f, "vbl{{a={a},m={m}}}"),
            SpectralResponseFilter::BalcilarLowpass { m } => write!(f, "balcilar_low{{m={m}}}"),
            SpectralResponseFilter::BalcilarBand { alpha, center } => {
                write!(f, "balcilar_band{{alpha={alpha},c={center}}}")
            }
            SpectralResponseFilter::PageRank { alpha } => write!(f, "page{{alpha={alpha}}}"),
            SpectralResponseFilter::Simoncelli { tau } => write!(f, "simoncelli{{tau={tau}}}"),
            SpectralResponseFilter::BandIndices { f1, f2, mid_gain } => {
                write!(f, "band{{f1={f1},f2={f2},mid={mid_gain}}}")
            }
        }
    }
}

struct Params<'a> {
    spec: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Params<'a> {
    fn take(&mut self, key: &str) -> Result<&'a str> {
        let pos = self
            .pairs
            .iter()
            .position(|(k, _)| *k == key)
            .ok_or_else(|| Error::Parse(format!("`{}`: missing parameter `{key}`", self.spec)))?;
        Ok(self.pairs.remove(pos).1)
    }

    fn float(&mut self, key: &str) -> Result<f64> {
        let raw = self.take(key)?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("`{}`: `{key}={raw}` is not a number", self.spec)))
    }

    fn int<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.take(key)?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("`{}`: `{key}={raw}` is not a nonnegative integer", self.spec)))
    }

    fn finish(self) -> Result<()> {
        match self.pairs.first() {
            Some((k, _)) => Err(Error::Parse(format!("`{}`: unknown parameter `{k}`", self.spec))),
            None => Ok(()),
        }
    }
}

impl FromStr for SpectralResponseFilter {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let open = spec
            .find('{')
            .ok_or_else(|| Error::Parse(format!("`{spec}`: expected `name{{key=value,...}}`")))?;
        if !spec.ends_with('}') {
            return Err(Error::Parse(format!("`{spec}`: missing closing `}}`")));
        }
        let name = spec[..open].trim();
        let body = &spec[open + 1..spec.len() - 1];
        let mut pairs = Vec::new();
        for token in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("`{spec}`: token `{token}` is not `key=value`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse(format!("`{spec}`: token `{token}` has an empty key")));
            }
            if v.is_empty() {
                return Err(Error::Parse(format!("`{spec}`: empty value in token `{token}`")));
            }
            if pairs.iter().any(|(pk, _)| *pk == k) {
                return Err(Error::Parse(format!("`{spec}`: parameter `{k}` given twice")));
            }
            pairs.push((k, v));
        }
        let mut p = Params { spec, pairs };
        let filter = match name {
            "sgc" => SpectralResponseFilter::Sgc { m: p.int("m")? },
            "tikhonov" => SpectralResponseFilter::Tikhonov { alpha: p.float("alpha")? },
            "vbl" => SpectralResponseFilter::VblPoly {
                a: p.float("a")?,
                m: p.int("m")?,
            },
            "balcilar_low" => SpectralResponseFilter::BalcilarLowpass { m: p.int("m")? },
            "balcilar_band" => SpectralResponseFilter::BalcilarBand {
                alpha: p.float("alpha")?,
                center: p.float("c")?,
            },
            "page" => SpectralResponseFilter::PageRank { alpha: p.float("alpha")? },
            "simoncelli" => SpectralResponseFilter::Simoncelli { tau: p.float("tau")? },
            "band" => SpectralResponseFilter::BandIndices {
                f1: p.int("f1")?,
                f2: p.int("f2")?,
                mid_gain: p.float("mid")?,
            },
            other => return Err(Error::Parse(format!("`{spec}`: unknown filter `{other}`"))),
        };
        p.finish()?;
        filter.validate()?;
        Ok(filter)
    }
}

impl TryFrom<String> for SpectralResponseFilter {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SpectralResponseFilter> for String {
    fn from(f: SpectralResponseFilter) -> String {
        f.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ring_graph;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn direct_evaluations() {
        let sgc = SpectralResponseFilter::Sgc { m: 2 };
        assert_abs_diff_eq!(sgc.response(0.5, 2.0).unwrap(), 0.25);
        let tik = SpectralResponseFilter::Tikhonov { alpha: 10.0 };
        assert_abs_diff_eq!(tik.response(0.0, 2.0).unwrap(), 1.0);
        assert_abs_diff_eq!(tik.response(0.1, 2.0).unwrap(), 0.5, epsilon = 1e-15);
        let page = SpectralResponseFilter::PageRank { alpha: 0.1 };
        assert_abs_diff_eq!(page.response(0.0, 2.0).unwrap(), 1.0);
        assert_abs_diff_eq!(page.response(1.0, 2.0).unwrap(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn negative_eigenvalue_is_a_domain_error() {
        let page = SpectralResponseFilter::PageRank { alpha: 0.1 };
        assert!(matches!(page.response(-0.5, 2.0), Err(Error::Domain { .. })));
        let simon = SpectralResponseFilter::Simoncelli { tau: 0.5 };
        assert!(matches!(simon.response(3.0, 2.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn sgc_odd_powers_reject_high_band() {
        for m in [1, 3, 5] {
            let h = SpectralResponseFilter::Sgc { m }.response(1.5, 2.0).unwrap();
            assert!(h < 0.0, "m={m}: {h}");
        }
        assert!(SpectralResponseFilter::Sgc { m: 2 }.response(1.5, 2.0).unwrap() > 0.0);
    }

    #[test]
    fn simoncelli_is_continuous() {
        let tau = 0.4;
        let f = SpectralResponseFilter::Simoncelli { tau };
        let at = |x: f64| f.response(x, 1.0).unwrap();
        assert_abs_diff_eq!(at(0.2), 1.0);
        assert_abs_diff_eq!(at(0.2 + 1e-9), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(at(0.4 - 1e-9), 0.0, epsilon = 1e-6);
        assert_eq!(at(0.41), 0.0);
        // normalization by λ_max
        assert_abs_diff_eq!(f.response(0.8, 2.0).unwrap(), at(0.4));
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = at(i as f64 / 100.0);
            assert!(v <= prev + 1e-12 && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn band_indices_by_rank() {
        let f = SpectralResponseFilter::BandIndices { f1: 1, f2: 3, mid_gain: 0.2 };
        let h = evaluate_response(&f, array![0.0, 0.3, 0.5, 0.9, 1.2].view(), 1.2).unwrap();
        assert_eq!(h, array![1.0, 0.2, 0.2, 0.0, 0.0]);
        let too_big = SpectralResponseFilter::BandIndices { f1: 1, f2: 6, mid_gain: 0.2 };
        assert!(evaluate_response(&too_big, h.view(), 1.0).is_err());
    }

    #[test]
    fn all_pass_and_full_band_are_identity() {
        let g = ring_graph(7);
        let dec = eigendecompose(
            g.laplacian(LaplacianKind::SymmetricNormalized).unwrap().view(),
            LaplacianKind::SymmetricNormalized,
        )
        .unwrap();
        let s = Array2::from_shape_fn((7, 2), |(i, j)| (i * 3 + j) as f64 - 4.0);
        let f = SpectralResponseFilter::BandIndices { f1: 7, f2: 7, mid_gain: 0.3 };
        assert_abs_diff_eq!(apply_spectral(&f, s.view(), &dec).unwrap(), s, epsilon = 1e-12);
        let all = dec.apply_response(Array1::ones(7).view(), s.view()).unwrap();
        assert_abs_diff_eq!(all, s, epsilon = 1e-12);
    }

    #[test]
    fn kind_mismatch_is_a_contract_error() {
        let g = ring_graph(5);
        let dec = eigendecompose(
            g.laplacian(LaplacianKind::Combinatorial).unwrap().view(),
            LaplacianKind::Combinatorial,
        )
        .unwrap();
        let s = Array2::ones((5, 1));
        assert!(matches!(
            apply_spectral(&SpectralResponseFilter::Sgc { m: 2 }, s.view(), &dec),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn diffusion_power_zero_and_two_vertex_mean() {
        let s = array![[0.5, 0.5], [0.5, 0.5]];
        let x = array![[1.0, 4.0], [3.0, -2.0]];
        let id = DiffusionFilter::new(s.clone(), 0).unwrap();
        assert_eq!(apply_diffusion(&id, x.view()).unwrap(), x);
        let one = DiffusionFilter::new(s, 1).unwrap();
        let y = apply_diffusion(&one, x.view()).unwrap();
        assert_eq!(y, array![[2.0, 1.0], [2.0, 1.0]]);
    }

    #[test]
    fn matrix_power_matches_repeated_products() {
        let s = array![[0.2, 0.5, 0.0], [0.5, 0.1, 0.3], [0.0, 0.3, 0.4]];
        for m in 0..7 {
            let mut want = Array2::eye(3);
            for _ in 0..m {
                want = s.dot(&want);
            }
            assert_abs_diff_eq!(matrix_power(&s, m), want, epsilon = 1e-14);
        }
    }

    #[test]
    fn pagerank_two_vertex_closed_form() {
        // S̃ = [[.5,.5],[.5,.5]], α = .5: I - .5 S̃ = [[.75,-.25],[-.25,.75]],
        // inverse = [[1.5,.5],[.5,1.5]], times α.
        let s = array![[0.5, 0.5], [0.5, 0.5]];
        let m = pagerank_diffusion_matrix(s.view(), 0.5).unwrap();
        assert_abs_diff_eq!(m, array![[0.75, 0.25], [0.25, 0.75]], epsilon = 1e-14);
        let x = array![[1.0], [0.0]];
        assert_abs_diff_eq!(pagerank_apply(s.view(), 0.5, x.view()).unwrap(), m.dot(&x), epsilon = 1e-14);
    }

    #[test]
    fn pagerank_alpha_one_is_identity() {
        let s = array![[0.5, 0.5], [0.5, 0.5]];
        assert_abs_diff_eq!(pagerank_diffusion_matrix(s.view(), 1.0).unwrap(), Array2::eye(2), epsilon = 1e-15);
        let near = pagerank_diffusion_matrix(s.view(), 1.0 - 1e-9).unwrap();
        assert_abs_diff_eq!(near, Array2::eye(2), epsilon = 1e-8);
    }

    #[test]
    fn chebyshev_constant_response() {
        let g = ring_graph(6);
        let l = g.laplacian(LaplacianKind::Combinatorial).unwrap();
        let s = Array2::from_shape_fn((6, 1), |(i, _)| i as f64);
        let coeffs = chebyshev_coefficients(|_| Ok(2.5), 4.0, 1).unwrap();
        let y = apply_chebyshev_coefficients(&coeffs, s.view(), l.view(), 4.0).unwrap();
        assert_abs_diff_eq!(y, &s * 2.5, epsilon = 1e-12);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for spec in [
            "sgc{m=2}",
            "tikhonov{alpha=10}",
            "page{alpha=0.1}",
            "simoncelli{tau=0.3}",
            "band{f1=1,f2=3,mid=0.2}",
            "vbl{a=0.1,m=20}",
            "balcilar_low{m=5}",
            "balcilar_band{alpha=2,c=0.5}",
        ] {
            let f: SpectralResponseFilter = spec.parse().unwrap();
            assert_eq!(f.to_string(), spec);
        }
        let spaced: SpectralResponseFilter = " band{ f1 = 1 , f2=3, mid=0.2 }".parse().unwrap();
        assert_eq!(spaced, SpectralResponseFilter::BandIndices { f1: 1, f2: 3, mid_gain: 0.2 });
    }

    #[test]
    fn parse_errors_name_the_token() {
        let err = "sgc{m=}".parse::<SpectralResponseFilter>().unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.contains("m=")), "{err}");
        let err = "sgc{q=2}".parse::<SpectralResponseFilter>().unwrap_err();
        assert!(err.to_string().contains("`m`"), "{err}");
        let err = "wavelet{m=2}".parse::<SpectralResponseFilter>().unwrap_err();
        assert!(err.to_string().contains("wavelet"));
        let err = "sgc{m=2,extra=1}".parse::<SpectralResponseFilter>().unwrap_err();
        assert!(err.to_string().contains("extra"));
        assert!("page{alpha=1.5}".parse::<SpectralResponseFilter>().is_err());
        assert!("vbl{a=0.7,m=2}".parse::<SpectralResponseFilter>().is_err());
    }
}
