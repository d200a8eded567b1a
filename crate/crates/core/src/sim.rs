//! Data generators and the Monte Carlo experiment runner.
//!
//! Designs follow the benchmark layout: a p x 3 loading matrix whose
//! columns carry first/middle/last blocks of nonzero entries, factors from
//! independent AR(1) processes with coefficient 0.9 and unit innovation
//! variance, and noise that is i.i.d. over time with unit variances and
//! 0.5 equicorrelation.

use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::AdmmOptions;
use crate::error::{Error, Result};
use crate::metrics::{subspace_distance, support_error};
use crate::selection::{lambda_grid, select_lambda, DEFAULT_GRID_COUNT, DEFAULT_GRID_MIN_RATIO};
use crate::series::{demean, PooledCovConfig, SeriesMatrix};
use crate::spectral::estimate_loading_space;
use crate::varimax::{threshold_loadings, varimax_rotate, VARIMAX_MAX_SWEEPS, VARIMAX_TOL};

/// Threshold applied by the `varimax1` baseline.
pub const VARIMAX1_THRESHOLD: f64 = 0.01;
/// Threshold applied by the `varimax2` baseline.
pub const VARIMAX2_THRESHOLD: f64 = 0.05;

/// Nonzero-count rule for the planted loading matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Sparsity {
    /// Each column gets a block of `round(fraction * p)` nonzero rows
    /// (first, middle, last); adjacent blocks may overlap.
    FractionBlocks { fraction: f64 },
    /// `m` nonzero entries in total, `m / r` per column in first/middle/last
    /// blocks.
    TotalNonzeros { m: usize },
}

fn default_r() -> usize {
    3
}

fn default_noise_scale() -> f64 {
    1.0
}

/// Monte Carlo design: dimensions, factor strength, sparsity rule, seed,
/// and replicate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub p: usize,
    pub n: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub delta: f64,
    pub sparsity: Sparsity,
    pub seed: u64,
    pub reps: usize,
    /// Multiplier on the noise term; 0 gives an exact factor structure
    /// (a test hook, not part of the benchmark designs).
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

/// Rounds a raw nonzero budget (e.g. `3 sqrt(p)`) to the nearest multiple
/// of `r` so it splits evenly across columns.
pub fn nearest_multiple(raw: f64, r: usize) -> usize {
    ((raw / r as f64).round() as usize) * r
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n < 2 || self.r == 0 {
            return Err(Error::Design(format!(
                "need p >= 1, n >= 2, r >= 1; got p={}, n={}, r={}",
                self.p, self.n, self.r
            )));
        }
        if self.r > self.p {
            return Err(Error::Design(format!(
                "r = {} exceeds p = {}",
                self.r, self.p
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Design(format!(
                "delta must lie in [0, 1], got {}",
                self.delta
            )));
        }
        if self.reps == 0 {
            return Err(Error::Design("reps must be at least 1".into()));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Design(format!(
                "noise_scale must be >= 0, got {}",
                self.noise_scale
            )));
        }
        self.block_size()?;
        Ok(())
    }

    /// Nonzero rows per column.
    pub fn block_size(&self) -> Result<usize> {
        let k = match self.sparsity {
            Sparsity::FractionBlocks { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::Design(format!(
                        "fraction must lie in (0, 1], got {fraction}"
                    )));
                }
                (fraction * self.p as f64).round() as usize
            }
            Sparsity::TotalNonzeros { m } => {
                if m % self.r != 0 {
                    return Err(Error::Design(format!(
                        "m = {m} is not divisible by r = {}",
                        self.r
                    )));
                }
                m / self.r
            }
        };
        if k == 0 || k > self.p {
            return Err(Error::Design(format!(
                "block of {k} nonzero rows does not fit p = {}",
                self.p
            )));
        }
        Ok(k)
    }

    /// Total nonzero count `m` of the planted loading matrix.
    pub fn total_nonzeros(&self) -> Result<usize> {
        Ok(self.block_size()? * self.r)
    }

    /// Start row of each column's nonzero block: first, evenly spaced
    /// middles, last.
    pub fn block_starts(&self) -> Result<Vec<usize>> {
        let k = self.block_size()?;
        let span = self.p - k;
        let starts = (0..self.r)
            .map(|i| {
                if self.r == 1 {
                    0
                } else {
                    ((i as f64) * (span as f64) / (self.r as f64 - 1.0)).round() as usize
                }
            })
            .collect();
        Ok(starts)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let design: SimDesign =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        design.validate()?;
        Ok(design)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

/// Deterministic per-replicate generator: one seed, one stream per
/// replicate, independent of scheduling.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

fn truncated_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() >= 0.1 {
            return z;
        }
    }
}

/// Planted sparse loading matrix: nonzero entries are standard normal
/// conditioned on `|z| >= 0.1`, divided by `(m/r)^(delta/2)`; zeros follow
/// the design's block layout.
pub fn gen_loading(design: &SimDesign, rng: &mut impl Rng) -> Result<Array2<f64>> {
    let k = design.block_size()?;
    let starts = design.block_starts()?;
    let scale = (k as f64).powf(design.delta / 2.0);
    let mut a = Array2::zeros((design.p, design.r));
    for (col, &start) in starts.iter().enumerate() {
        for row in start..start + k {
            a[[row, col]] = truncated_normal(rng) / scale;
        }
    }
    Ok(a)
}

/// Factor matrix (r x n): independent AR(1) rows with coefficient 0.9 and
/// unit innovation variance, initialized from the stationary distribution.
pub fn gen_factors(n: usize, r: usize, rng: &mut impl Rng) -> Array2<f64> {
    let coef = 0.9f64;
    let stationary_sd = (1.0 / (1.0 - coef * coef)).sqrt();
    let mut f = Array2::zeros((r, n));
    for i in 0..r {
        let mut prev: f64 = rng.sample::<f64, _>(StandardNormal) * stationary_sd;
        f[[i, 0]] = prev;
        for t in 1..n {
            let innovation: f64 = rng.sample(StandardNormal);
            prev = coef * prev + innovation;
            f[[i, t]] = prev;
        }
    }
    f
}

/// Noise matrix (p x n): i.i.d. over time, unit variances, equicorrelation
/// 0.5 via a shared component.
pub fn gen_noise(n: usize, p: usize, rng: &mut impl Rng) -> Array2<f64> {
    let shared = 0.5f64.sqrt();
    let mut e = Array2::zeros((p, n));
    for t in 0..n {
        let common: f64 = rng.sample::<f64, _>(StandardNormal) * shared;
        for i in 0..p {
            let own: f64 = rng.sample::<f64, _>(StandardNormal) * shared;
            e[[i, t]] = common + own;
        }
    }
    e
}

/// Draws one dataset `X = A F + noise_scale * E` and returns it with the
/// planted loading matrix.
pub fn simulate_dataset(design: &SimDesign, rng: &mut impl Rng) -> Result<(SeriesMatrix, Array2<f64>)> {
    design.validate()?;
    let a = gen_loading(design, rng)?;
    let f = gen_factors(design.n, design.r, rng);
    let e = gen_noise(design.n, design.p, rng);
    let x = a.dot(&f) + &(design.noise_scale * &e);
    Ok((SeriesMatrix::new(x, None)?, a))
}

/// Estimators compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Top-r eigenvectors of the pooled matrix.
    Eigen,
    /// Varimax rotation thresholded at 0.01.
    Varimax1,
    /// Varimax rotation thresholded at 0.05.
    Varimax2,
    /// Sequential ADMM with MCP and BIC-selected lambda.
    Sparse,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Eigen => "eigen",
            Method::Varimax1 => "varimax1",
            Method::Varimax2 => "varimax2",
            Method::Sparse => "sparse",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eigen" => Ok(Method::Eigen),
            "varimax1" => Ok(Method::Varimax1),
            "varimax2" => Ok(Method::Varimax2),
            "sparse" => Ok(Method::Sparse),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected eigen, varimax1, varimax2, or sparse"
            ))),
        }
    }
}

/// Aggregated scores for one method.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Replicates that produced a score.
    pub reps_used: usize,
    /// Replicates whose estimation failed and were excluded.
    pub failures: usize,
    pub mean_distance: Option<f64>,
    pub sd_distance: Option<f64>,
    pub mean_abs_m_diff: Option<f64>,
    pub sd_abs_m_diff: Option<f64>,
}

/// Result of a full Monte Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub design: SimDesign,
    pub h0: usize,
    pub methods: Vec<MethodSummary>,
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

impl ExperimentSummary {
    /// One CSV row per method; empty cells where a statistic is undefined.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "method,reps_used,failures,mean_distance,sd_distance,mean_abs_m_diff,sd_abs_m_diff\n",
        );
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                m.method,
                m.reps_used,
                m.failures,
                fmt_opt(m.mean_distance),
                fmt_opt(m.sd_distance),
                fmt_opt(m.mean_abs_m_diff),
                fmt_opt(m.sd_abs_m_diff),
            ));
        }
        out
    }

    /// Human-readable fixed-width table.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "design: p={} n={} r={} delta={} seed={} reps={} h0={}\n",
            self.design.p,
            self.design.n,
            self.design.r,
            self.design.delta,
            self.design.seed,
            self.design.reps,
            self.h0
        ));
        out.push_str(&format!(
            "{:<10} {:>5} {:>5} {:>18} {:>18}\n",
            "method", "used", "fail", "distance", "|m - m_hat|"
        ));
        for m in &self.methods {
            let dist = match (m.mean_distance, m.sd_distance) {
                (Some(mean), Some(sd)) => format!("{mean:.4} ({sd:.4})"),
                (Some(mean), None) => format!("{mean:.4}"),
                _ => "-".into(),
            };
            let supp = match (m.mean_abs_m_diff, m.sd_abs_m_diff) {
                (Some(mean), Some(sd)) => format!("{mean:.2} ({sd:.2})"),
                (Some(mean), None) => format!("{mean:.2}"),
                _ => "-".into(),
            };
            out.push_str(&format!(
                "{:<10} {:>5} {:>5} {:>18} {:>18}\n",
                m.method.label(),
                m.reps_used,
                m.failures,
                dist,
                supp
            ));
        }
        out
    }
}

struct RepScore {
    distance: f64,
    abs_m_diff: Option<f64>,
}

/// Runs the full Monte Carlo: per replicate, simulate a dataset, estimate
/// with each method, and score the loading-space distance (all methods)
/// plus the nonzero-count error (sparse and varimax methods).
///
/// Replicates use independent RNG substreams and may run in parallel;
/// aggregation follows replicate order, so the summary is deterministic for
/// a given `(design, methods, h0)`.
pub fn run_experiment(
    design: &SimDesign,
    methods: &[Method],
    h0: usize,
) -> Result<ExperimentSummary> {
    design.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    if h0 == 0 || h0 >= design.n {
        return Err(Error::InvalidLag { h: h0, n: design.n });
    }

    let cfg = PooledCovConfig { h0, demean: true };
    let opts = AdmmOptions::default();
    let wants_varimax = methods
        .iter()
        .any(|m| matches!(m, Method::Varimax1 | Method::Varimax2));

    let rep_scores: Vec<Vec<Option<RepScore>>> = (0..design.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(design.seed, rep as u64);
            let all_failed = || (0..methods.len()).map(|_| None).collect::<Vec<_>>();
            let simulated = simulate_dataset(design, &mut rng);
            let (series, a_true) = match simulated {
                Ok(v) => v,
                Err(_) => return all_failed(),
            };
            let m_true = a_true.iter().filter(|v| **v != 0.0).count();
            let basis = match estimate_loading_space(&series, &cfg, design.r) {
                Ok(b) => b,
                Err(_) => return all_failed(),
            };
            let rotated = if wants_varimax {
                varimax_rotate(&basis, VARIMAX_TOL, VARIMAX_MAX_SWEEPS).ok()
            } else {
                None
            };
            let bic_series = if cfg.demean { demean(&series) } else { series.clone() };

            methods
                .iter()
                .map(|method| match method {
                    Method::Eigen => subspace_distance(basis.columns(), &a_true)
                        .ok()
                        .map(|distance| RepScore {
                            distance,
                            abs_m_diff: None,
                        }),
                    Method::Varimax1 | Method::Varimax2 => {
                        let threshold = if *method == Method::Varimax1 {
                            VARIMAX1_THRESHOLD
                        } else {
                            VARIMAX2_THRESHOLD
                        };
                        let rotated = rotated.as_ref()?;
                        let cut = threshold_loadings(rotated.basis.columns(), threshold);
                        let m_hat = cut.iter().filter(|v| **v != 0.0).count();
                        subspace_distance(&cut, &a_true).ok().map(|distance| RepScore {
                            distance,
                            abs_m_diff: Some(m_hat.abs_diff(m_true) as f64),
                        })
                    }
                    Method::Sparse => {
                        let grid =
                            lambda_grid(&basis, DEFAULT_GRID_COUNT, DEFAULT_GRID_MIN_RATIO).ok()?;
                        let fit = select_lambda(&bic_series, &basis, &grid, &opts).ok()?;
                        let distance = subspace_distance(fit.loading.q(), &a_true).ok()?;
                        let report = support_error(&fit.loading, &a_true).ok()?;
                        Some(RepScore {
                            distance,
                            abs_m_diff: Some(report.abs_diff as f64),
                        })
                    }
                })
                .collect()
        })
        .collect();

    let summaries = methods
        .iter()
        .enumerate()
        .map(|(idx, &method)| {
            let mut distances = Vec::new();
            let mut diffs = Vec::new();
            let mut failures = 0usize;
            for rep in &rep_scores {
                match &rep[idx] {
                    Some(score) => {
                        distances.push(score.distance);
                        if let Some(d) = score.abs_m_diff {
                            diffs.push(d);
                        }
                    }
                    None => failures += 1,
                }
            }
            let (mean_distance, sd_distance) = mean_sd(&distances);
            let (mean_abs_m_diff, sd_abs_m_diff) = mean_sd(&diffs);
            MethodSummary {
                method,
                reps_used: distances.len(),
                failures,
                mean_distance,
                sd_distance,
                mean_abs_m_diff,
                sd_abs_m_diff,
            }
        })
        .collect();

    Ok(ExperimentSummary {
        design: design.clone(),
        h0,
        methods: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn design_51(p: usize, n: usize, reps: usize) -> SimDesign {
        SimDesign {
            p,
            n,
            r: 3,
            delta: 0.0,
            sparsity: Sparsity::FractionBlocks { fraction: 0.4 },
            seed: 7,
            reps,
            noise_scale: 1.0,
        }
    }

    #[test]
    fn block_layout_matches_the_overlapping_design() {
        let d = design_51(20, 100, 1);
        assert_eq!(d.block_size().unwrap(), 8);
        assert_eq!(d.block_starts().unwrap(), vec![0, 6, 12]);
        assert_eq!(d.total_nonzeros().unwrap(), 24);
    }

    #[test]
    fn nearest_multiple_reproduces_growth_rules() {
        // m/3 columns printed for p = 50, 100, 200, 500 under the four
        // growth rates.
        let cases: &[(f64, usize, usize)] = &[
            (3.0 * 50f64.sqrt(), 3, 21),
            (3.0 * 50f64.powf(2.0 / 3.0), 3, 42),
            (3.0 * 50f64.powf(3.0 / 4.0), 3, 57),
            (1.8 * 50.0, 3, 90),
            (3.0 * 100f64.sqrt(), 3, 30),
            (3.0 * 100f64.powf(2.0 / 3.0), 3, 66),
            (3.0 * 100f64.powf(3.0 / 4.0), 3, 96),
            (1.8 * 100.0, 3, 180),
            (3.0 * 200f64.sqrt(), 3, 42),
            (3.0 * 200f64.powf(2.0 / 3.0), 3, 102),
            (3.0 * 200f64.powf(3.0 / 4.0), 3, 159),
            (1.8 * 200.0, 3, 360),
            (3.0 * 500f64.sqrt(), 3, 66),
            (3.0 * 500f64.powf(2.0 / 3.0), 3, 189),
            (3.0 * 500f64.powf(3.0 / 4.0), 3, 318),
            (1.8 * 500.0, 3, 900),
        ];
        for &(raw, r, expected) in cases {
            assert_eq!(nearest_multiple(raw, r), expected, "raw {raw}");
        }
    }

    #[test]
    fn gen_loading_respects_pattern_and_magnitudes() {
        let d = design_51(20, 100, 1);
        let mut rng = replicate_rng(1, 0);
        let a = gen_loading(&d, &mut rng).unwrap();
        for (col, range) in [(0usize, 0..8usize), (1, 6..14), (2, 12..20)] {
            for row in 0..20 {
                let inside = range.contains(&row);
                assert_eq!(a[[row, col]] != 0.0, inside, "row {row} col {col}");
                if inside {
                    assert!(a[[row, col]].abs() >= 0.1);
                }
            }
        }
    }

    #[test]
    fn gen_loading_scales_weak_factors() {
        let d = SimDesign {
            delta: 0.25,
            sparsity: Sparsity::TotalNonzeros { m: 30 },
            ..design_51(40, 100, 1)
        };
        let mut rng = replicate_rng(2, 0);
        let a = gen_loading(&d, &mut rng).unwrap();
        let floor = 0.1 / 10f64.powf(0.125);
        for &v in a.iter().filter(|v| **v != 0.0) {
            assert!(v.abs() >= floor - 1e-12, "value {v}");
        }
    }

    #[test]
    fn gen_factors_matches_ar1_moments() {
        let n = 100_000;
        let mut rng = replicate_rng(3, 0);
        let f = gen_factors(n, 3, &mut rng);
        let target_var = 1.0 / (1.0 - 0.81);
        for i in 0..3 {
            let row = f.row(i);
            let mean = row.sum() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            assert!(
                (var - target_var).abs() <= 0.05 * target_var,
                "row {i} variance {var}"
            );
            let mut num = 0.0;
            for t in 1..n {
                num += (row[t] - mean) * (row[t - 1] - mean);
            }
            let acf1 = num / (n - 1) as f64 / var;
            assert!((acf1 - 0.9).abs() <= 0.02, "row {i} acf {acf1}");
        }
        // Cross-row independence.
        for i in 0..3 {
            for j in i + 1..3 {
                let a = f.row(i);
                let b = f.row(j);
                let ma = a.sum() / n as f64;
                let mb = b.sum() / n as f64;
                let mut cov = 0.0;
                let mut va = 0.0;
                let mut vb = 0.0;
                for t in 0..n {
                    cov += (a[t] - ma) * (b[t] - mb);
                    va += (a[t] - ma) * (a[t] - ma);
                    vb += (b[t] - mb) * (b[t] - mb);
                }
                let corr = cov / (va.sqrt() * vb.sqrt());
                assert!(corr.abs() <= 0.02, "rows {i},{j} corr {corr}");
            }
        }
    }

    #[test]
    fn gen_noise_matches_equicorrelation_moments() {
        let n = 100_000;
        let p = 4;
        let mut rng = replicate_rng(4, 0);
        let e = gen_noise(n, p, &mut rng);
        let means: Vec<f64> = (0..p).map(|i| e.row(i).sum() / n as f64).collect();
        for i in 0..p {
            let var = e
                .row(i)
                .iter()
                .map(|v| (v - means[i]) * (v - means[i]))
                .sum::<f64>()
                / (n - 1) as f64;
            assert!((var - 1.0).abs() <= 0.05, "variance {var}");
        }
        for i in 0..p {
            for j in i + 1..p {
                let mut cov = 0.0;
                for t in 0..n {
                    cov += (e[[i, t]] - means[i]) * (e[[j, t]] - means[j]);
                }
                cov /= (n - 1) as f64;
                assert!((cov - 0.5).abs() <= 0.05, "cov {cov}");
            }
        }
        // No serial correlation.
        for i in 0..p {
            let row = e.row(i);
            let mut num = 0.0;
            let mut den = 0.0;
            for t in 0..n {
                den += (row[t] - means[i]) * (row[t] - means[i]);
                if t > 0 {
                    num += (row[t] - means[i]) * (row[t - 1] - means[i]);
                }
            }
            let acf1 = num / den;
            assert!(acf1.abs() <= 0.02, "row {i} acf {acf1}");
        }
    }

    #[test]
    fn simulate_dataset_shapes_and_determinism() {
        let d = design_51(50, 200, 1);
        let mut rng = replicate_rng(d.seed, 0);
        let (x1, a1) = simulate_dataset(&d, &mut rng).unwrap();
        assert_eq!((x1.p(), x1.n()), (50, 200));
        assert_eq!(a1.dim(), (50, 3));

        let mut rng = replicate_rng(d.seed, 0);
        let (x2, a2) = simulate_dataset(&d, &mut rng).unwrap();
        assert_eq!(x1.values(), x2.values());
        assert_eq!(a1, a2);
    }

    #[test]
    fn noiseless_dataset_has_factor_rank() {
        let d = SimDesign {
            noise_scale: 0.0,
            ..design_51(10, 50, 1)
        };
        let mut rng = replicate_rng(5, 0);
        let (x, _) = simulate_dataset(&d, &mut rng).unwrap();
        let m = x.values().dot(&x.values().t());
        let eig = crate::spectral::top_r_eigvectors(&m, 10).unwrap();
        let evals = eig.eigenvalues().unwrap();
        let scale = evals[0].abs().max(1.0);
        for &v in &evals[3..] {
            assert!(v.abs() <= 1e-10 * scale, "eigenvalue {v}");
        }
    }

    #[test]
    fn method_labels_round_trip() {
        for m in [Method::Eigen, Method::Varimax1, Method::Varimax2, Method::Sparse] {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn design_json_round_trip() {
        let text = r#"{
            "p": 20, "n": 100, "r": 3, "delta": 0.25,
            "sparsity": {"type": "fraction_blocks", "fraction": 0.4},
            "seed": 42, "reps": 5
        }"#;
        let d = SimDesign::from_json_str(text).unwrap();
        assert_eq!(d.p, 20);
        assert_eq!(d.noise_scale, 1.0);
        assert_abs_diff_eq!(d.delta, 0.25);

        let bad = r#"{"p": 20, "n": 100, "sparsity": {"type": "total_nonzeros", "m": 31},
                      "seed": 1, "reps": 1}"#;
        assert!(SimDesign::from_json_str(bad).is_err());
    }

    #[test]
    fn run_experiment_is_deterministic_and_complete() {
        let d = design_51(12, 60, 4);
        let methods = [Method::Eigen, Method::Varimax2];
        let s1 = run_experiment(&d, &methods, 1).unwrap();
        let s2 = run_experiment(&d, &methods, 1).unwrap();
        assert_eq!(s1.to_csv_string(), s2.to_csv_string());
        assert_eq!(s1.methods.len(), 2);
        assert_eq!(s1.methods[0].reps_used + s1.methods[0].failures, 4);
        assert!(s1.methods[0].mean_distance.is_some());
        assert!(s1.methods[0].mean_abs_m_diff.is_none());
        assert!(s1.methods[1].mean_abs_m_diff.is_some());
    }
}
