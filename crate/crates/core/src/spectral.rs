//! Symmetric eigendecomposition, graph Fourier transform and the Laplacian
//! quadratic form.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_rows, Error, Result};
use crate::graph::LaplacianKind;

/// Eigenvalues at or below this fraction of `λ_max` count as zero.
pub const ZERO_EIGENVALUE_REL_TOL: f64 = 1e-8;

const SYMMETRY_CHECK_TOL: f64 = 1e-10;

/// Ascending eigenvalues and orthonormal eigenvectors (columns) of a
/// Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
    kind: LaplacianKind,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigenvectors
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    fn zero_threshold(&self) -> f64 {
        ZERO_EIGENVALUE_REL_TOL * self.lambda_max().max(f64::MIN_POSITIVE)
    }

    /// Indices of eigenvalues treated as nonzero.
    pub fn nonzero_indices(&self) -> Vec<usize> {
        let thr = self.zero_threshold();
        (0..self.n()).filter(|&i| self.eigenvalues[i] > thr).collect()
    }

    /// `F · diag(response) · Fᵀ · signal`.
    pub fn apply_response(&self, response: ArrayView1<f64>, signal: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_rows("signal", self.n(), signal.nrows())?;
        check_rows("response", self.n(), response.len())?;
        let mut freq = self.eigenvectors.t().dot(&signal);
        for (mut row, &h) in freq.axis_iter_mut(Axis(0)).zip(response.iter()) {
            row *= h;
        }
        Ok(self.eigenvectors.dot(&freq))
    }

    /// Dense operator `F · diag(response) · Fᵀ`.
    pub fn operator(&self, response: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_rows("response", self.n(), response.len())?;
        let mut scaled = self.eigenvectors.clone();
        for (mut col, &h) in scaled.axis_iter_mut(Axis(1)).zip(response.iter()) {
            col *= h;
        }
        let mut op = scaled.dot(&self.eigenvectors.t());
        symmetrize(&mut op);
        Ok(op)
    }
}

pub(crate) fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// Eigendecomposition of any symmetric matrix: ascending eigenvalues, and
/// each eigenvector signed so its largest-magnitude entry is positive.
pub fn symmetric_eigen(m: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (n, c) = m.dim();
    if n != c {
        return Err(Error::DimensionMismatch(format!("matrix must be square, got {n}x{c}")));
    }
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > SYMMETRY_CHECK_TOL * scale {
                return Err(Error::Contract(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
        }
    }
    if let Some(v) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("matrix contains non-finite entry {v}")));
    }
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        let max_abs = col.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let pivot = col
            .iter()
            .position(|v| v.abs() >= max_abs * (1.0 - 1e-9))
            .unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, dst]] = sign * col[i];
        }
    }
    Ok((values, vectors))
}

/// Eigendecomposition of a graph Laplacian.
pub fn eigendecompose(laplacian: ArrayView2<f64>, kind: LaplacianKind) -> Result<SpectralDecomposition> {
    let (eigenvalues, eigenvectors) = symmetric_eigen(laplacian)?;
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        kind,
    })
}

/// Graph Fourier transform `Fᵀ s`.
pub fn gft(signal: ArrayView2<f64>, dec: &SpectralDecomposition) -> Result<Array2<f64>> {
    check_rows("signal", dec.n(), signal.nrows())?;
    Ok(dec.eigenvectors.t().dot(&signal))
}

/// Inverse transform `F s̃`.
pub fn igft(freq: ArrayView2<f64>, dec: &SpectralDecomposition) -> Result<Array2<f64>> {
    check_rows("frequency signal", dec.n(), freq.nrows())?;
    Ok(dec.eigenvectors.dot(&freq))
}

/// Per-column Laplacian quadratic form `sᵀ L s`.
pub fn smoothness(signal: ArrayView2<f64>, laplacian: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_rows("signal", laplacian.nrows(), signal.nrows())?;
    if laplacian.nrows() != laplacian.ncols() {
        return Err(Error::DimensionMismatch("laplacian must be square".into()));
    }
    let ls = laplacian.dot(&signal);
    Ok((&ls * &signal).sum_axis(Axis(0)))
}

/// `trace(sᵀ L s)`: the sum of the per-column smoothness values.
pub fn total_smoothness(signal: ArrayView2<f64>, laplacian: ArrayView2<f64>) -> Result<f64> {
    Ok(smoothness(signal, laplacian)?.sum())
}

fn first_two_nonzero(dec: &SpectralDecomposition) -> Result<(usize, usize)> {
    let nz = dec.nonzero_indices();
    let zeros = dec.n() - nz.len();
    if zeros > 1 {
        return Err(Error::Disconnected(format!(
            "{zeros} zero eigenvalues; the graph has several components"
        )));
    }
    if nz.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need two nonzero eigenvalues, found {}",
            nz.len()
        )));
    }
    Ok((nz[0], nz[1]))
}

/// 2-D layout from the eigenvectors of the two smallest nonzero eigenvalues.
pub fn laplacian_eigenmaps_2d(dec: &SpectralDecomposition) -> Result<Array2<f64>> {
    let (a, b) = first_two_nonzero(dec)?;
    let mut out = Array2::zeros((dec.n(), 2));
    out.column_mut(0).assign(&dec.eigenvectors.column(a));
    out.column_mut(1).assign(&dec.eigenvectors.column(b));
    Ok(out)
}

/// Eigenvector of the smallest nonzero eigenvalue of a connected graph.
pub fn fiedler_vector(dec: &SpectralDecomposition) -> Result<Array1<f64>> {
    let nz = dec.nonzero_indices();
    let zeros = dec.n() - nz.len();
    if zeros > 1 {
        return Err(Error::Disconnected(format!(
            "{zeros} zero eigenvalues; the Fiedler vector is not unique"
        )));
    }
    let idx = *nz
        .first()
        .ok_or_else(|| Error::Degenerate("no nonzero eigenvalue".into()))?;
    Ok(dec.eigenvectors.column(idx).to_owned())
}
