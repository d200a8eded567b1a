//! Lambda-grid construction, BIC evaluation, lambda selection, and
//! factor-series recovery.
//!
//! The selection criterion is
//!
//! ```text
//! BIC(lambda) = log( 1/(np) sum_t ||x_t - xhat_t||^2 ) + log(np)/(np) * |Q(lambda)|
//! ```
//!
//! with `xhat_t = Q (Q'Q)^{-1} Q' x_t` and `|Q(lambda)|` the nonzero count.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::admm::{
    estimate_q_with_fallback, update_s, AdmmOptions, ColumnDiagnostics, LoadingMatrix,
};
use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;
use crate::series::SeriesMatrix;
use crate::spectral::Basis;
use crate::varimax::{order_by_l1, varimax_rotate, VARIMAX_MAX_SWEEPS, VARIMAX_TOL};

/// Default number of grid points.
pub const DEFAULT_GRID_COUNT: usize = 50;
/// Default ratio of the smallest to the largest grid value.
pub const DEFAULT_GRID_MIN_RATIO: f64 = 0.001;

/// Condition-number ceiling for `Q'Q` before a fit is declared singular.
const MAX_CONDITION: f64 = 1e12;

/// A residual sum of squares below this fraction of `||X||_F^2` counts as a
/// zero residual, which makes the BIC log degenerate.
const DEGENERATE_RSS_REL: f64 = 1e-20;

/// A fitted factor model at one penalty weight.
#[derive(Debug, Clone)]
pub struct FactorModelFit {
    pub loading: LoadingMatrix,
    /// Recovered factor series, r x n.
    pub factors: Array2<f64>,
    pub bic: f64,
    pub lambda: f64,
    /// Per-column convergence records from the ADMM pass.
    pub diagnostics: Vec<ColumnDiagnostics>,
}

/// `(Q'Q)^{-1} Q' X` computed through the eigendecomposition of `Q'Q`,
/// with a condition check that names suspect columns.
fn projection_coefficients(q: &Array2<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
    let r = q.ncols();
    let gram = q.t().dot(q);
    let na = DMatrix::from_fn(r, r, |i, j| gram[[i, j]]);
    let eig = na.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
    if !(min_ev > 0.0) || cond > MAX_CONDITION {
        let mut columns: Vec<usize> = (0..r)
            .filter(|&j| q.column(j).iter().all(|v| *v == 0.0))
            .map(|j| j + 1)
            .collect();
        if columns.is_empty() {
            columns = (1..=r).collect();
        }
        return Err(Error::SingularFit { columns, cond });
    }
    let qtx = q.t().dot(x);
    let rhs = DMatrix::from_fn(r, qtx.ncols(), |i, j| qtx[[i, j]]);
    let mut inv = DMatrix::<f64>::zeros(r, r);
    for k in 0..r {
        let v = eig.eigenvectors.column(k);
        let scale = 1.0 / eig.eigenvalues[k];
        for i in 0..r {
            for j in 0..r {
                inv[(i, j)] += scale * v[i] * v[j];
            }
        }
    }
    let z: DMatrix<f64> = inv * rhs;
    Ok(Array2::from_shape_fn((r, x.ncols()), |(i, j)| z[(i, j)]))
}

/// Recovered factors `z_t = (Q'Q)^{-1} Q' x_t`, as an r x n matrix.
pub fn recover_factors(q: &LoadingMatrix, series: &SeriesMatrix) -> Result<Array2<f64>> {
    if q.p() != series.p() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", series.p()),
            actual: format!("{}", q.p()),
        });
    }
    projection_coefficients(q.q(), series.values())
}

/// Projection of each observation onto the column space of the loading
/// matrix; equals `Q * recover_factors(Q, s)` exactly.
pub fn fitted_values(q: &LoadingMatrix, series: &SeriesMatrix) -> Result<SeriesMatrix> {
    let factors = recover_factors(q, series)?;
    let fitted = q.q().dot(&factors);
    SeriesMatrix::new(fitted, series.labels().map(|l| l.to_vec()))
}

fn bic_value(rss: f64, np: f64, nonzeros: usize) -> f64 {
    (rss / np).ln() + np.ln() / np * nonzeros as f64
}

/// BIC of a fitted loading matrix on the series it was estimated from.
///
/// A residual that vanishes relative to the data scale returns a negative
/// infinity sentinel (the degenerate flag); such fits lose ties in
/// [`select_lambda`].
pub fn bic(series: &SeriesMatrix, q: &LoadingMatrix) -> Result<f64> {
    let fitted = fitted_values(q, series)?;
    let x = series.values();
    let rss: f64 = x
        .iter()
        .zip(fitted.values().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let total: f64 = x.iter().map(|v| v * v).sum();
    if rss <= DEGENERATE_RSS_REL * total {
        return Ok(f64::NEG_INFINITY);
    }
    let np = (series.n() * series.p()) as f64;
    Ok(bic_value(rss, np, q.nonzero_count()))
}

/// Geometric grid of penalty weights, descending from the smallest value
/// that zeroes the entire first column's q-update at initialization down to
/// `lambda_max * min_ratio`.
pub fn lambda_grid(s_hat: &Basis, count: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::Config(format!("grid count must be >= 2, got {count}")));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::Config(format!(
            "grid min_ratio must lie in (0, 1), got {min_ratio}"
        )));
    }
    let rho = AdmmOptions::default().rho;
    let g = s_hat.columns().dot(&s_hat.columns().t());
    let rotated = varimax_rotate(s_hat, VARIMAX_TOL, VARIMAX_MAX_SWEEPS)?;
    let ordered = order_by_l1(rotated.basis.columns());
    let q0 = ordered.column(0).to_owned();
    let b = Array2::eye(s_hat.p());
    let v = Array1::zeros(s_hat.p());
    let s0 = update_s(&g, &b, &q0, &v, rho)?;
    let y = (&(rho * &s0) + &g.dot(&s0)) / rho.sqrt();
    let lambda_max = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(lambda_max > 0.0) {
        return Err(Error::Selection("lambda_max is zero".into()));
    }
    let grid = (0..count)
        .map(|i| lambda_max * min_ratio.powf(i as f64 / (count - 1) as f64))
        .collect();
    Ok(grid)
}

/// Whether `(candidate_bic, candidate_lambda)` beats the incumbent; ties go
/// to the larger lambda (the sparser fit).
fn improves(candidate: (f64, f64), incumbent: (f64, f64)) -> bool {
    candidate.0 < incumbent.0 || (candidate.0 == incumbent.0 && candidate.1 > incumbent.1)
}

/// Fits every grid value, scores each by BIC on `series`, and returns the
/// fit minimizing it.
///
/// Fits whose BIC cannot be computed (singular loading matrix) or whose
/// residual is degenerate are excluded; if nothing scoreable remains, a
/// selection error is raised.
pub fn select_lambda(
    series: &SeriesMatrix,
    s_hat: &Basis,
    grid: &[f64],
    opts: &AdmmOptions,
) -> Result<FactorModelFit> {
    if grid.is_empty() {
        return Err(Error::Selection("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Selection("grid values must be finite and >= 0".into()));
    }
    opts.validate()?;

    let fits: Vec<Result<FactorModelFit>> = grid
        .par_iter()
        .map(|&lambda| {
            let spec = PenaltySpec {
                lambda,
                gamma: opts.gamma,
            };
            let est = estimate_q_with_fallback(s_hat, spec, opts, grid)?;
            let bic_val = bic(series, &est.loading)?;
            let factors = recover_factors(&est.loading, series)?;
            Ok(FactorModelFit {
                loading: est.loading,
                factors,
                bic: bic_val,
                lambda,
                diagnostics: est.columns,
            })
        })
        .collect();

    let mut best: Option<FactorModelFit> = None;
    let mut degenerate = 0usize;
    for fit in fits {
        match fit {
            Ok(f) if f.bic.is_finite() => {
                let candidate = (f.bic, f.lambda);
                let replace = match &best {
                    Some(b) => improves(candidate, (b.bic, b.lambda)),
                    None => true,
                };
                if replace {
                    best = Some(f);
                }
            }
            Ok(_) => degenerate += 1,
            Err(Error::SingularFit { .. }) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| {
        Error::Selection(format!(
            "no scoreable fit on a grid of {} values ({} degenerate)",
            grid.len(),
            degenerate
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn loading(q: Array2<f64>) -> LoadingMatrix {
        LoadingMatrix::from_matrix(q, 0.0)
    }

    fn series(values: Array2<f64>) -> SeriesMatrix {
        SeriesMatrix::new(values, None).unwrap()
    }

    #[test]
    fn fitted_values_projects_onto_coordinates() {
        let q = loading(array![[1.0], [0.0]]);
        let s = series(array![[3.0, 3.0], [7.0, 7.0]]);
        let fitted = fitted_values(&q, &s).unwrap();
        assert_eq!(fitted.values()[[0, 0]], 3.0);
        assert_eq!(fitted.values()[[1, 0]], 0.0);
    }

    #[test]
    fn fitted_values_fixes_points_in_span() {
        let q = loading(array![[0.6], [0.8]]);
        let s = series(array![[1.2, -0.6], [1.6, -0.8]]);
        let fitted = fitted_values(&q, &s).unwrap();
        for (a, e) in fitted.values().iter().zip(s.values().iter()) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn fitted_values_is_idempotent() {
        let q = loading(array![[1.0, 0.5], [0.0, 1.0], [2.0, -0.5]]);
        let s = series(array![[3.0, 1.0], [7.0, -2.0], [0.5, 4.0]]);
        let once = fitted_values(&q, &s).unwrap();
        let twice = fitted_values(&q, &once).unwrap();
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn residual_is_orthogonal_to_loading_columns() {
        let q = loading(array![[1.0, 0.2], [0.3, 1.0], [-0.5, 0.7], [0.1, 0.0]]);
        let s = series(array![
            [3.0, 1.0, 0.2],
            [7.0, -2.0, 1.1],
            [0.5, 4.0, -0.7],
            [2.0, 0.0, 0.4]
        ]);
        let fitted = fitted_values(&q, &s).unwrap();
        let resid = s.values() - fitted.values();
        let cross = q.q().t().dot(&resid);
        for v in cross.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn recover_factors_inverts_exact_factor_structure() {
        let q_mat = array![[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]];
        let z = array![[1.0, -2.0, 0.5], [3.0, 0.0, -1.0]];
        let x = q_mat.dot(&z);
        let q = loading(q_mat);
        let s = series(x);
        let rec = recover_factors(&q, &s).unwrap();
        for (a, e) in rec.iter().zip(z.iter()) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-10);
        }
        let fitted = fitted_values(&q, &s).unwrap();
        let via_factors = q.q().dot(&rec);
        for (a, b) in fitted.values().iter().zip(via_factors.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn recover_factors_coordinate_example() {
        let q = loading(array![[1.0], [0.0]]);
        let s = series(array![[3.0, 3.0], [7.0, 7.0]]);
        let rec = recover_factors(&q, &s).unwrap();
        assert_abs_diff_eq!(rec[[0, 0]], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_loading_is_named() {
        let q = loading(array![[1.0, 0.0], [0.0, 0.0]]);
        let s = series(array![[3.0, 1.0], [7.0, 2.0]]);
        match bic(&s, &q).unwrap_err() {
            Error::SingularFit { columns, .. } => assert_eq!(columns, vec![2]),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn bic_matches_hand_computation() {
        // Duplicating the time point leaves both BIC terms unchanged
        // relative to the single-observation hand computation
        // (log(2)/2 == log(4)/4), so the frozen value carries over.
        let q = loading(array![[1.0], [0.0]]);
        let s = series(array![[3.0, 3.0], [4.0, 4.0]]);
        let value = bic(&s, &q).unwrap();
        let expected = 8.0f64.ln() + 2.0f64.ln() / 2.0;
        assert_abs_diff_eq!(value, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(value, 2.4260151319598084, epsilon = 1e-12);
    }

    #[test]
    fn bic_grows_linearly_in_nonzero_count_at_fixed_residual() {
        // Both fits produce the same projection of x, but the second carries
        // an extra nonzero loading.
        let x = series(array![[3.0, 3.0], [4.0, 4.0], [0.0, 0.0]]);
        let q1 = loading(array![[1.0], [0.0], [0.0]]);
        let q2 = loading(array![[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]);
        let b1 = bic(&x, &q1).unwrap();
        let b2 = bic(&x, &q2).unwrap();
        let np = 6.0f64;
        assert_abs_diff_eq!(b2 - b1, np.ln() / np, epsilon = 1e-12);
    }

    #[test]
    fn bic_degenerates_on_exact_span() {
        let q = loading(array![[0.6], [0.8]]);
        let s = series(array![[1.2, -0.6], [1.6, -0.8]]);
        let value = bic(&s, &q).unwrap();
        assert!(value == f64::NEG_INFINITY);
    }

    #[test]
    fn lambda_grid_is_geometric_and_descending() {
        let basis = Basis::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let grid = lambda_grid(&basis, 3, 0.01).unwrap();
        assert_eq!(grid.len(), 3);
        assert!(grid.windows(2).all(|w| w[0] > w[1]));
        assert_abs_diff_eq!(grid[1] / grid[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(grid[2] / grid[0], 0.01, epsilon = 1e-12);
    }

    #[test]
    fn lambda_grid_head_zeroes_the_first_column_update() {
        use crate::penalty::{mcp_prox, PenaltySpec};
        let basis = Basis::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let grid = lambda_grid(&basis, 5, 0.001).unwrap();
        // Reconstruct the first q-update target the grid head was built
        // from; every coordinate must firm-threshold to zero there.
        let g = basis.columns().dot(&basis.columns().t());
        let rotated = varimax_rotate(&basis, VARIMAX_TOL, VARIMAX_MAX_SWEEPS).unwrap();
        let ordered = order_by_l1(rotated.basis.columns());
        let q0 = ordered.column(0).to_owned();
        let b: Array2<f64> = Array2::eye(3);
        let s0 = update_s(&g, &b, &q0, &Array1::zeros(3), 1.0).unwrap();
        let y = &s0 + &g.dot(&s0);
        let spec = PenaltySpec::mcp(grid[0]);
        for &z in y.iter() {
            assert_eq!(mcp_prox(z, 1.0, spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn improves_prefers_smaller_bic_then_larger_lambda() {
        assert!(improves((1.0, 0.1), (2.0, 0.5)));
        assert!(!improves((2.0, 0.9), (1.0, 0.1)));
        assert!(improves((1.0, 0.5), (1.0, 0.1)));
        assert!(!improves((1.0, 0.1), (1.0, 0.5)));
    }

    #[test]
    fn select_lambda_single_grid_point_returns_it() {
        // A clean two-factor panel.
        let q_true = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let z = array![
            [1.0, -2.0, 0.5, 1.5, -0.7, 0.9],
            [3.0, 0.2, -1.0, 0.4, 1.1, -0.6]
        ];
        let noise = array![
            [0.11, -0.02, 0.05, 0.04, -0.07, 0.02],
            [-0.03, 0.08, 0.01, -0.05, 0.02, 0.06],
            [0.04, 0.02, -0.09, 0.01, 0.03, -0.04],
            [-0.06, 0.01, 0.02, 0.07, -0.01, 0.03]
        ];
        let x = &q_true.dot(&z) + &noise;
        let s = series(x);
        let basis =
            crate::spectral::estimate_loading_space(&s, &crate::series::PooledCovConfig::default(), 2)
                .unwrap();
        let fit = select_lambda(&s, &basis, &[0.05], &AdmmOptions::default()).unwrap();
        assert_eq!(fit.lambda, 0.05);
        assert!(fit.bic.is_finite());
        assert_eq!(fit.factors.ncols(), s.n());
    }
}
