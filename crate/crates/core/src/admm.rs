//! Sequential per-column ADMM estimation of the sparse loading matrix.
//!
//! Each column solves
//!
//! ```text
//! min_q 0.5 || G - B q s' ||_F^2 + sum_j P(|q_j|)   s.t. s = B q, ||s|| = 1
//! ```
//!
//! with `G` the projector onto the estimated loading space and `B` the
//! projector onto the orthocomplement of the previously extracted columns
//! (`B = I` for the first column). The three updates per iteration are
//!
//! - s-update: `s = c1 / ||c1||` with `c1 = G B q + rho B q - v`,
//! - q-update: penalized least squares on
//!   `0.5 || (v + rho s + G s)/sqrt(rho) - sqrt(rho) B q ||^2 + sum_j P(|q_j|)`,
//! - v-update: `v += rho (s - B q)`,
//!
//! stopping once `||s - B q|| <= delta_stop`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::penalty::{penalized_ls, Penalty, PenaltySpec, CD_MAX_ITER, CD_TOL};
use crate::spectral::Basis;
use crate::varimax::{order_by_l1, varimax_rotate, VARIMAX_MAX_SWEEPS, VARIMAX_TOL};

/// Entries smaller than this in magnitude are snapped to exact zeros when a
/// loading matrix is assembled.
pub const SUPPORT_SNAP_TOL: f64 = 1e-12;

/// Norm threshold below which the s-update direction counts as degenerate.
const DEGENERATE_NORM: f64 = 1e-14;

/// Restart cap for degenerate s-update directions.
const MAX_RESTARTS: usize = 3;

/// ADMM tuning knobs.
#[derive(Debug, Clone, Copy)]
pub struct AdmmOptions {
    /// Augmented-Lagrangian penalty parameter.
    pub rho: f64,
    /// Stop once `||s - B q||` falls below this.
    pub delta_stop: f64,
    /// Iteration cap per column.
    pub max_iter: usize,
    /// MCP concavity parameter used when a spec is built from these options.
    pub gamma: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            delta_stop: 1e-5,
            max_iter: 1000,
            gamma: 3.0,
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.delta_stop > 0.0) || self.max_iter == 0 {
            return Err(Error::Domain(
                "ADMM options must all be positive".into(),
            ));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::Domain(format!(
                "gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Final per-column ADMM variables.
#[derive(Debug, Clone)]
pub struct AdmmState {
    /// Loading column iterate.
    pub q: Array1<f64>,
    /// Projected unit iterate.
    pub s: Array1<f64>,
    /// Lagrange multipliers.
    pub v: Array1<f64>,
    pub rho: f64,
    /// `||s - B q||` at exit.
    pub residual: f64,
}

/// Convergence record for one estimated column.
#[derive(Debug, Clone)]
pub struct ColumnDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Degenerate-direction restarts consumed.
    pub restarts: usize,
    /// `||B q_hat||` before the final renormalization of `s_tilde`.
    pub projected_norm: f64,
    /// The column came out identically zero.
    pub zero_column: bool,
    /// Penalty weight actually used for this column.
    pub lambda: f64,
    /// The lambda came from the zero-column fallback scan.
    pub fallback: bool,
}

/// Sparse p x r loading estimate with exact supports.
#[derive(Debug, Clone)]
pub struct LoadingMatrix {
    q: Array2<f64>,
    supports: Vec<Vec<usize>>,
    lambda_used: f64,
}

impl LoadingMatrix {
    /// Wraps a matrix, snapping `|q| < 1e-12` arithmetic dust to exact zero
    /// and recording the nonzero pattern per column.
    pub fn from_matrix(mut q: Array2<f64>, lambda_used: f64) -> Self {
        q.mapv_inplace(|v| if v.abs() < SUPPORT_SNAP_TOL { 0.0 } else { v });
        let supports = q
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
        Self {
            q,
            supports,
            lambda_used,
        }
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    /// Nonzero row indexes per column.
    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    pub fn lambda_used(&self) -> f64 {
        self.lambda_used
    }

    /// Total nonzero count.
    pub fn nonzero_count(&self) -> usize {
        self.supports.iter().map(|s| s.len()).sum()
    }

    pub fn column_is_zero(&self, j: usize) -> bool {
        self.supports[j].is_empty()
    }

    pub fn p(&self) -> usize {
        self.q.nrows()
    }

    pub fn r(&self) -> usize {
        self.q.ncols()
    }
}

fn norm2(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn check_projector(b: &Array2<f64>) -> Result<()> {
    let asym = (b - &b.t()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if asym > 1e-10 {
        return Err(Error::NotSymmetric {
            max_asym: asym,
            tol: 1e-10,
        });
    }
    let bb = b.dot(b);
    let drift = (&bb - b).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if drift > 1e-10 {
        return Err(Error::Domain(format!(
            "B is not idempotent: max |BB - B| = {drift:.3e}"
        )));
    }
    Ok(())
}

/// s-update: normalized `c1 = G B q + rho B q - v`.
///
/// A direction norm below 1e-14 is reported as degenerate so the caller can
/// restart from a perturbed initializer.
pub fn update_s(
    g: &Array2<f64>,
    b: &Array2<f64>,
    q: &Array1<f64>,
    v: &Array1<f64>,
    rho: f64,
) -> Result<Array1<f64>> {
    let bq = b.dot(q);
    let c1 = g.dot(&bq) + &(rho * &bq) - v;
    let norm = norm2(&c1);
    if norm < DEGENERATE_NORM {
        return Err(Error::DegenerateDirection { norm });
    }
    Ok(c1 / norm)
}

fn q_update_target(
    g: &Array2<f64>,
    s: &Array1<f64>,
    v: &Array1<f64>,
    rho: f64,
) -> Array1<f64> {
    (v + &(rho * s) + &g.dot(s)) / rho.sqrt()
}

fn q_update_solve(
    design: &Array2<f64>,
    g: &Array2<f64>,
    s: &Array1<f64>,
    v: &Array1<f64>,
    rho: f64,
    spec: PenaltySpec,
    init: &Array1<f64>,
) -> Result<Array1<f64>> {
    let y = q_update_target(g, s, v, rho);
    let penalty = Penalty::Mcp(spec);
    let out = penalized_ls(&y, design, &penalty, init, CD_TOL, CD_MAX_ITER)?;
    Ok(out.solution)
}

/// q-update: coordinate descent on the penalized least-squares form with
/// target `(v + rho s + G s)/sqrt(rho)` and design `sqrt(rho) B`.
///
/// `B` must be a symmetric idempotent matrix within 1e-10.
pub fn update_q(
    g: &Array2<f64>,
    b: &Array2<f64>,
    s: &Array1<f64>,
    v: &Array1<f64>,
    rho: f64,
    spec: PenaltySpec,
    init: &Array1<f64>,
) -> Result<Array1<f64>> {
    check_projector(b)?;
    let design = b.mapv(|x| x * rho.sqrt());
    q_update_solve(&design, g, s, v, rho, spec, init)
}

/// v-update: `v + rho (s - B q)`.
pub fn update_v(
    v: &Array1<f64>,
    rho: f64,
    s: &Array1<f64>,
    b: &Array2<f64>,
    q: &Array1<f64>,
) -> Array1<f64> {
    v + &((s - &b.dot(q)) * rho)
}

/// One estimated column with its projected direction and diagnostics.
#[derive(Debug, Clone)]
pub struct ColumnEstimate {
    pub q: Array1<f64>,
    /// `B q / ||B q||`, or the last unit s-iterate for a zero column.
    pub s_tilde: Array1<f64>,
    pub state: AdmmState,
    pub diagnostics: ColumnDiagnostics,
}

fn is_zero_column(q: &Array1<f64>) -> bool {
    q.iter().all(|v| v.abs() < SUPPORT_SNAP_TOL)
}

fn perturbed(init: &Array1<f64>, round: usize) -> Array1<f64> {
    let scale = 1e-6 * norm2(init).max(1.0);
    let mut out = init.clone();
    for (j, v) in out.iter_mut().enumerate() {
        let sign = if (j + round) % 2 == 0 { 1.0 } else { -1.0 };
        *v += scale * sign;
    }
    out
}

/// Runs the s/q/v iteration for one column until `||s - B q||` drops below
/// `opts.delta_stop` or the iteration cap is reached.
///
/// Degenerate s-update directions trigger a restart from a perturbed
/// initializer, at most three times. Non-convergence is flagged in the
/// diagnostics, not raised as an error. A column that collapses to zero for
/// two consecutive iterations exits early (its residual cannot shrink).
pub fn estimate_column(
    g: &Array2<f64>,
    b: &Array2<f64>,
    init_q: &Array1<f64>,
    spec: PenaltySpec,
    opts: &AdmmOptions,
) -> Result<ColumnEstimate> {
    opts.validate()?;
    check_projector(b)?;
    if norm2(init_q) == 0.0 {
        return Err(Error::Domain("ADMM initializer must be nonzero".into()));
    }
    let p = init_q.len();
    let rho = opts.rho;
    let design = b.mapv(|x| x * rho.sqrt());

    let mut q = init_q.clone();
    let mut v = Array1::zeros(p);
    let mut s = Array1::zeros(p);
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut restarts = 0;
    let mut iterations = 0;
    let mut zero_streak = 0;

    loop {
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        match update_s(g, b, &q, &v, rho) {
            Ok(s_new) => s = s_new,
            Err(Error::DegenerateDirection { .. }) if restarts < MAX_RESTARTS => {
                restarts += 1;
                q = perturbed(init_q, restarts);
                v.fill(0.0);
                iterations = 0;
                zero_streak = 0;
                continue;
            }
            Err(Error::DegenerateDirection { .. }) => break,
            Err(e) => return Err(e),
        }
        q = q_update_solve(&design, g, &s, &v, rho, spec, &q)?;
        v = update_v(&v, rho, &s, b, &q);
        residual = norm2(&(&s - &b.dot(&q)));
        if residual <= opts.delta_stop {
            converged = true;
            break;
        }
        if is_zero_column(&q) {
            zero_streak += 1;
            if zero_streak >= 2 {
                break;
            }
        } else {
            zero_streak = 0;
        }
    }

    let bq = b.dot(&q);
    let projected_norm = norm2(&bq);
    let zero_column = is_zero_column(&q);
    let s_tilde = if projected_norm > DEGENERATE_NORM {
        bq / projected_norm
    } else {
        s.clone()
    };
    Ok(ColumnEstimate {
        diagnostics: ColumnDiagnostics {
            iterations,
            residual,
            converged,
            restarts,
            projected_norm,
            zero_column,
            lambda: spec.lambda,
            fallback: false,
        },
        state: AdmmState {
            q: q.clone(),
            s: s.clone(),
            v,
            rho,
            residual,
        },
        q,
        s_tilde,
    })
}

/// Full sequential estimate: loading matrix, the orthonormal directions
/// extracted alongside it, and per-column diagnostics.
#[derive(Debug, Clone)]
pub struct QEstimate {
    pub loading: LoadingMatrix,
    /// p x r matrix of the `s_tilde` directions.
    pub s_tilde: Array2<f64>,
    pub columns: Vec<ColumnDiagnostics>,
}

impl QEstimate {
    pub fn all_converged(&self) -> bool {
        self.columns.iter().all(|c| c.converged)
    }
}

fn complement_projector(p: usize, cols: &[Array1<f64>]) -> Array2<f64> {
    if cols.is_empty() {
        return Array2::eye(p);
    }
    let mut s = Array2::zeros((p, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        s.column_mut(j).assign(c);
    }
    let mut b = &Array2::eye(p) - &s.dot(&s.t());
    // Exact symmetry guards the projector checks downstream.
    b = (&b + &b.t()) / 2.0;
    b
}

fn column_init(b: &Array2<f64>, u: &Array1<f64>) -> Array1<f64> {
    let projected = b.dot(u);
    if norm2(&projected) >= 1e-8 {
        return projected;
    }
    // The varimax direction lies (numerically) in the span already
    // extracted; fall back to the coordinate axis B retains the most of.
    let mut best = 0;
    let mut best_diag = f64::NEG_INFINITY;
    for j in 0..b.nrows() {
        if b[[j, j]] > best_diag {
            best_diag = b[[j, j]];
            best = j;
        }
    }
    let axis = b.column(best).to_owned();
    let norm = norm2(&axis);
    if norm > DEGENERATE_NORM {
        axis / norm
    } else {
        axis
    }
}

fn estimate_q_impl(
    s_hat: &Basis,
    spec: PenaltySpec,
    opts: &AdmmOptions,
    fallback_grid: Option<&[f64]>,
) -> Result<QEstimate> {
    opts.validate()?;
    let p = s_hat.p();
    let r = s_hat.k();
    let g = s_hat.columns().dot(&s_hat.columns().t());
    let g = (&g + &g.t()) / 2.0;

    let rotated = varimax_rotate(s_hat, VARIMAX_TOL, VARIMAX_MAX_SWEEPS)?;
    let ordered = order_by_l1(rotated.basis.columns());

    let mut s_tilde_cols: Vec<Array1<f64>> = Vec::with_capacity(r);
    let mut q = Array2::zeros((p, r));
    let mut columns = Vec::with_capacity(r);
    for i in 0..r {
        let b = complement_projector(p, &s_tilde_cols);
        let init = column_init(&b, &ordered.column(i).to_owned());
        let mut est = estimate_column(&g, &b, &init, spec, opts)?;
        if est.diagnostics.zero_column {
            if let Some(grid) = fallback_grid {
                // Refit with the largest grid value that keeps the column
                // alive; a zero column would break the unit-norm constraint
                // semantics and poison every later column.
                let mut sorted: Vec<f64> = grid.to_vec();
                sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite grid"));
                for lambda in sorted {
                    if lambda == spec.lambda {
                        continue;
                    }
                    let retry_spec = PenaltySpec {
                        lambda,
                        gamma: spec.gamma,
                    };
                    let retry = estimate_column(&g, &b, &init, retry_spec, opts)?;
                    if !retry.diagnostics.zero_column {
                        est = retry;
                        est.diagnostics.fallback = true;
                        break;
                    }
                }
            }
        }
        q.column_mut(i).assign(&est.q);
        s_tilde_cols.push(est.s_tilde.clone());
        columns.push(est.diagnostics);
    }

    let mut s_tilde = Array2::zeros((p, r));
    for (j, c) in s_tilde_cols.iter().enumerate() {
        s_tilde.column_mut(j).assign(c);
    }
    Ok(QEstimate {
        loading: LoadingMatrix::from_matrix(q, spec.lambda),
        s_tilde,
        columns,
    })
}

/// Sequential estimation of all r columns at a single penalty weight.
///
/// Column 1 runs with `B = I`; column i projects out the previously
/// extracted directions. Initialization follows the varimax rotation of the
/// input basis with columns ordered by ascending L1 norm.
pub fn estimate_q(s_hat: &Basis, spec: PenaltySpec, opts: &AdmmOptions) -> Result<QEstimate> {
    estimate_q_impl(s_hat, spec, opts, None)
}

/// Like [`estimate_q`], but a column that collapses to zero is refit with
/// the largest grid value that keeps it nonzero (and flagged).
pub fn estimate_q_with_fallback(
    s_hat: &Basis,
    spec: PenaltySpec,
    opts: &AdmmOptions,
    grid: &[f64],
) -> Result<QEstimate> {
    estimate_q_impl(s_hat, spec, opts, Some(grid))
}
