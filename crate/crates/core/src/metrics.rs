//! Evaluation metrics: subspace distance, Gram-Schmidt orthonormalization,
//! support recovery counts, and column alignment.

use ndarray::{Array1, Array2};

use crate::admm::LoadingMatrix;
use crate::error::{Error, Result};
use crate::spectral::Basis;

/// Relative tolerance below which a Gram-Schmidt residual is treated as a
/// linearly dependent column.
const RANK_TOL: f64 = 1e-10;

/// Sequential Gram-Schmidt with renormalization; the span is preserved.
///
/// Columns are processed left to right: `s_1 = u_1 / ||u_1||` and
/// `s_i = (I - S_i S_i') u_i` renormalized.
pub fn orthonormalize(u: &Array2<f64>) -> Result<Basis> {
    let (p, k) = u.dim();
    if k == 0 || k > p {
        return Err(Error::ShapeMismatch {
            expected: format!("1..={p} columns"),
            actual: format!("{k}"),
        });
    }
    let mut q = Array2::zeros((p, k));
    for j in 0..k {
        let col = u.column(j).to_owned();
        let scale = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale <= f64::MIN_POSITIVE {
            return Err(Error::RankDeficient { column: j + 1 });
        }
        let mut res = col;
        // Two projection passes keep the result orthogonal to working
        // precision even for nearly dependent columns.
        for _ in 0..2 {
            for prev in 0..j {
                let qc = q.column(prev);
                let coef = res.dot(&qc);
                res = res - coef * &qc.to_owned();
            }
        }
        let norm = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL * scale {
            return Err(Error::RankDeficient { column: j + 1 });
        }
        let normalized = res / norm;
        q.column_mut(j).assign(&normalized);
    }
    Basis::new(q)
}

/// Distance between the column spans of two full-rank p x k matrices:
/// `sqrt(1 - tr(H1 H1' H2 H2') / k)` with `H_i` orthonormal bases.
///
/// Lies in [0, 1]: 0 for equal spans, 1 for orthogonal spans. Tiny negative
/// radicands from roundoff (above -1e-12) are clamped to zero.
pub fn subspace_distance(u1: &Array2<f64>, u2: &Array2<f64>) -> Result<f64> {
    if u1.dim() != u2.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} x {}", u1.nrows(), u1.ncols()),
            actual: format!("{} x {}", u2.nrows(), u2.ncols()),
        });
    }
    let k = u1.ncols();
    let h1 = orthonormalize(u1)?;
    let h2 = orthonormalize(u2)?;
    // Evaluated through the projection residual: with C = H2' H1,
    // ||H1 - H2 C||_F^2 = k - ||C||_F^2, so the radicand comes out as a sum
    // of squares instead of a cancellation-prone difference near zero.
    let cross = h2.columns().t().dot(h1.columns());
    let residual = h1.columns() - &h2.columns().dot(&cross);
    let radicand = residual.iter().map(|v| v * v).sum::<f64>() / k as f64;
    if radicand < -1e-12 {
        return Err(Error::Domain(format!(
            "subspace distance radicand {radicand} below tolerance"
        )));
    }
    Ok(radicand.max(0.0).sqrt().min(1.0))
}

/// Support-recovery report for an estimated loading matrix.
#[derive(Debug, Clone)]
pub struct SupportReport {
    /// Nonzero count of the estimate.
    pub m_hat: usize,
    /// Nonzero count of the reference matrix.
    pub m_true: usize,
    /// `|m - m_hat|`.
    pub abs_diff: usize,
    /// Nonzero row indexes per estimated column.
    pub estimated: Vec<Vec<usize>>,
    /// Nonzero row indexes per reference column.
    pub truth: Vec<Vec<usize>>,
}

/// Compares nonzero counts of an estimate against a reference matrix.
pub fn support_error(q_hat: &LoadingMatrix, q_true: &Array2<f64>) -> Result<SupportReport> {
    if q_hat.q().dim() != q_true.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} x {}", q_hat.q().nrows(), q_hat.q().ncols()),
            actual: format!("{} x {}", q_true.nrows(), q_true.ncols()),
        });
    }
    let estimated: Vec<Vec<usize>> = q_hat.supports().to_vec();
    let truth: Vec<Vec<usize>> = q_true
        .columns()
        .into_iter()
        .map(|c| {
            c.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let m_hat: usize = estimated.iter().map(|s| s.len()).sum();
    let m_true: usize = truth.iter().map(|s| s.len()).sum();
    Ok(SupportReport {
        m_hat,
        m_true,
        abs_diff: m_hat.abs_diff(m_true),
        estimated,
        truth,
    })
}

/// Column matching between an estimate and a reference.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// `permutation[j]` is the estimate column matched to reference column j.
    pub permutation: Vec<usize>,
    /// Sign applied to each matched estimate column.
    pub signs: Vec<f64>,
    /// Permuted, sign-flipped copy of the estimate.
    pub aligned: Array2<f64>,
    /// Absolute cosine of each matched pair.
    pub cosines: Vec<f64>,
}

/// Greedy maximum-|cosine| matching of estimate columns to reference
/// columns, with sign flips. Exhaustive-quality matching is only claimed for
/// r <= 8.
pub fn align_columns(q_hat: &Array2<f64>, q_true: &Array2<f64>) -> Result<Alignment> {
    if q_hat.dim() != q_true.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} x {}", q_hat.nrows(), q_hat.ncols()),
            actual: format!("{} x {}", q_true.nrows(), q_true.ncols()),
        });
    }
    let r = q_hat.ncols();
    if r > 8 {
        return Err(Error::Domain(format!(
            "column alignment supports r <= 8, got {r}"
        )));
    }
    let cosine = |a: &Array1<f64>, b: &Array1<f64>| -> f64 {
        let na = a.dot(a).sqrt();
        let nb = b.dot(b).sqrt();
        if na <= f64::MIN_POSITIVE || nb <= f64::MIN_POSITIVE {
            0.0
        } else {
            a.dot(b) / (na * nb)
        }
    };
    let mut cos = Array2::zeros((r, r));
    for jt in 0..r {
        let tcol = q_true.column(jt).to_owned();
        for jh in 0..r {
            let hcol = q_hat.column(jh).to_owned();
            cos[[jt, jh]] = cosine(&hcol, &tcol);
        }
    }
    let mut permutation = vec![usize::MAX; r];
    let mut signs = vec![1.0; r];
    let mut cosines = vec![0.0; r];
    let mut used_true = vec![false; r];
    let mut used_hat = vec![false; r];
    for _ in 0..r {
        let mut best = (0usize, 0usize);
        let mut best_abs = f64::NEG_INFINITY;
        for jt in 0..r {
            if used_true[jt] {
                continue;
            }
            for jh in 0..r {
                if used_hat[jh] {
                    continue;
                }
                if cos[[jt, jh]].abs() > best_abs {
                    best_abs = cos[[jt, jh]].abs();
                    best = (jt, jh);
                }
            }
        }
        let (jt, jh) = best;
        used_true[jt] = true;
        used_hat[jh] = true;
        permutation[jt] = jh;
        signs[jt] = if cos[[jt, jh]] < 0.0 { -1.0 } else { 1.0 };
        cosines[jt] = cos[[jt, jh]].abs();
    }
    let mut aligned = Array2::zeros(q_hat.dim());
    for jt in 0..r {
        let src = q_hat.column(permutation[jt]);
        for i in 0..q_hat.nrows() {
            aligned[[i, jt]] = signs[jt] * src[i];
        }
    }
    Ok(Alignment {
        permutation,
        signs,
        aligned,
        cosines,
    })
}
