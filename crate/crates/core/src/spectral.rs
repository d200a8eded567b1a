//! Unpenalized loading-space estimator: the span of the top-r eigenvectors
//! of the pooled autocovariance matrix.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::series::{build_m, PooledCovConfig, SeriesMatrix};

/// A p x k matrix with orthonormal columns, optionally carrying the
/// eigenvalues the columns were extracted with (descending).
#[derive(Debug, Clone)]
pub struct Basis {
    columns: Array2<f64>,
    eigenvalues: Option<Vec<f64>>,
}

/// Entrywise tolerance for the orthonormality check at construction.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

impl Basis {
    /// Wraps a matrix whose columns are orthonormal within 1e-10 entrywise.
    pub fn new(columns: Array2<f64>) -> Result<Self> {
        let gram = columns.t().dot(&columns);
        let k = gram.nrows();
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[[i, j]] - target).abs() > ORTHONORMALITY_TOL {
                    return Err(Error::Domain(format!(
                        "columns are not orthonormal: gram[{i},{j}] = {}",
                        gram[[i, j]]
                    )));
                }
            }
        }
        Ok(Self {
            columns,
            eigenvalues: None,
        })
    }

    /// Attaches eigenvalues; they must be sorted descending.
    pub fn with_eigenvalues(mut self, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != self.k() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} eigenvalues", self.k()),
                actual: format!("{}", eigenvalues.len()),
            });
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Domain("eigenvalues not sorted descending".into()));
        }
        self.eigenvalues = Some(eigenvalues);
        Ok(self)
    }

    pub fn columns(&self) -> &Array2<f64> {
        &self.columns
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    /// Ambient dimension p.
    pub fn p(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of columns k.
    pub fn k(&self) -> usize {
        self.columns.ncols()
    }
}

/// Flips each column so its largest-magnitude entry is positive, ties broken
/// by lowest index. Keeps outputs deterministic across platforms.
pub(crate) fn fix_column_signs(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Eigenvectors of `(M + M')/2` for the r largest eigenvalues.
///
/// The input must be symmetric within 1e-8; it is symmetrized before the
/// decomposition to guard against roundoff asymmetry. Column signs follow
/// the largest-entry-positive convention.
pub fn top_r_eigvectors(m: &Array2<f64>, r: usize) -> Result<Basis> {
    let (p, q) = m.dim();
    if p != q {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            actual: format!("{p} x {q}"),
        });
    }
    if r == 0 || r > p {
        return Err(Error::InvalidRank { r, p });
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let max_asym = (m - &m.t()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_asym > 1e-8 * scale {
        return Err(Error::NotSymmetric {
            max_asym,
            tol: 1e-8,
        });
    }
    let sym = (m + &m.t()) / 2.0;
    let dm = DMatrix::from_fn(p, p, |i, j| sym[[i, j]]);
    let eig = dm.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let mut columns = Array2::zeros((p, r));
    let mut eigenvalues = Vec::with_capacity(r);
    for (out_idx, &src) in order.iter().take(r).enumerate() {
        for i in 0..p {
            columns[[i, out_idx]] = eig.eigenvectors[(i, src)];
        }
        eigenvalues.push(eig.eigenvalues[src]);
    }
    fix_column_signs(&mut columns);
    Basis::new(columns)?.with_eigenvalues(eigenvalues)
}

/// Estimated loading space: top-r eigenvectors of the pooled matrix built
/// from `series` under `cfg`.
pub fn estimate_loading_space(
    series: &SeriesMatrix,
    cfg: &PooledCovConfig,
    r: usize,
) -> Result<Basis> {
    if r > series.p() {
        return Err(Error::InvalidRank { r, p: series.p() });
    }
    let m = build_m(series, cfg)?;
    top_r_eigvectors(&m, r)
}
