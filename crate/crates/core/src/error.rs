//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, simulation, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at row {row}, column {col}: {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("entry {value} at variable {var}, time {t} is not strictly positive; log transform undefined")]
    NonPositiveEntry { var: usize, t: usize, value: f64 },
    #[error("invalid lag h = {h} for a series with n = {n} time points")]
    InvalidLag { h: usize, n: usize },
    #[error("invalid rank r = {r} for dimension p = {p}")]
    InvalidRank { r: usize, p: usize },
    #[error("matrix is not symmetric: max |A - A'| = {max_asym:.3e} exceeds {tol:.1e}")]
    NotSymmetric { max_asym: f64, tol: f64 },
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("column {column} is linearly dependent on the preceding columns")]
    RankDeficient { column: usize },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("degenerate direction in s-update: ||c1|| = {norm:.3e}")]
    DegenerateDirection { norm: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular fit: Q'Q has condition number {cond:.3e}; suspect columns {columns:?}")]
    SingularFit { columns: Vec<usize>, cond: f64 },
    #[error("lambda selection failed: {0}")]
    Selection(String),
    #[error("invalid design: {0}")]
    Design(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
