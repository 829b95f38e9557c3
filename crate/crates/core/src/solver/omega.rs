use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};

use crate::error::{Block, Error, Result};

/// Below this trace the square root of `Q^T Q` is treated as zero.
pub const DEGENERATE_TRACE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaUpdate {
    pub omega: Array2<f64>,
    /// Set when `Q` was (numerically) zero and the identity was returned.
    pub degenerate: bool,
}

/// Closed-form covariance update `K (Q^T Q)^{1/2} / tr((Q^T Q)^{1/2})`.
///
/// `q` holds one type-specific weight vector per row (shape `K x M`), so the
/// Gram matrix of the rows is `Q^T Q` in column convention. Negative
/// eigenvalues from round-off are clamped to zero before the square root.
pub fn update_omega(q: ArrayView2<'_, f64>) -> Result<OmegaUpdate> {
    let k = q.nrows();
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric { block: Block::new(None, None, None), message: "non-finite Q in covariance update".into() });
    }
    let gram = q.dot(&q.t());
    let eig = SymmetricEigen::new(DMatrix::from_fn(k, k, |i, j| gram[[i, j]]));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let trace: f64 = roots.iter().sum();
    if !(trace >= DEGENERATE_TRACE) {
        return Ok(OmegaUpdate { omega: Array2::eye(k), degenerate: true });
    }
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let scale = k as f64 / trace;
    let omega = Array2::from_shape_fn((k, k), |(i, j)| 0.5 * (root[(i, j)] + root[(j, i)]) * scale);
    Ok(OmegaUpdate { omega, degenerate: false })
}

/// `(Omega + ridge * I)^{-1}` via Cholesky.
pub(crate) fn regularized_inverse(omega: ArrayView2<'_, f64>, ridge: f64) -> Option<Array2<f64>> {
    let k = omega.nrows();
    let m = DMatrix::from_fn(k, k, |i, j| omega[[i, j]] + if i == j { ridge } else { 0.0 });
    let inv = m.cholesky()?.inverse();
    let out = Array2::from_shape_fn((k, k), |(i, j)| inv[(i, j)]);
    out.iter().all(|v| v.is_finite()).then_some(out)
}
