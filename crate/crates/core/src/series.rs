//! Time-series container, preprocessing, lagged autocovariances, and the
//! pooled matrix they feed into.
//!
//! The sample autocovariance at lag `h` is
//!
//! ```text
//! Sigma_x(h) = 1/(n-h) * sum_{t=1}^{n-h} x_t x_{t+h}'
//! ```
//!
//! and the pooled matrix is `M = sum_{h=1}^{h0} Sigma_x(h) Sigma_x(h)'`,
//! which is symmetric positive semidefinite by construction.

use std::path::Path;

use ndarray::{s, Array2};

use crate::error::{Error, Result};

/// Observed p-dimensional time series over n time points.
///
/// Rows index variables, columns index time. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SeriesMatrix {
    values: Array2<f64>,
    labels: Option<Vec<String>>,
}

impl SeriesMatrix {
    /// Builds a series from a p x n value matrix and optional variable labels.
    pub fn new(values: Array2<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let (p, n) = values.dim();
        if p < 1 {
            return Err(Error::InvalidSeries("p must be at least 1".into()));
        }
        if n < 2 {
            return Err(Error::InvalidSeries(format!(
                "need at least 2 time points, got {n}"
            )));
        }
        if let Some((i, j)) = values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(idx, _)| idx)
        {
            return Err(Error::InvalidSeries(format!(
                "non-finite entry at variable {}, time {}",
                i + 1,
                j + 1
            )));
        }
        if let Some(ref l) = labels {
            if l.len() != p {
                return Err(Error::InvalidSeries(format!(
                    "{} labels for {} variables",
                    l.len(),
                    p
                )));
            }
        }
        Ok(Self { values, labels })
    }

    /// Number of variables.
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    /// Number of time points.
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    /// The p x n value matrix.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label for variable `i`, or a generated `v{i+1}` placeholder.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => format!("v{}", i + 1),
        }
    }
}

/// Configuration for the pooled lagged-autocovariance matrix.
#[derive(Debug, Clone, Copy)]
pub struct PooledCovConfig {
    /// Maximum lag pooled into M (positive).
    pub h0: usize,
    /// Remove each variable's sample mean before forming cross-products.
    pub demean: bool,
}

impl Default for PooledCovConfig {
    fn default() -> Self {
        Self { h0: 1, demean: true }
    }
}

impl PooledCovConfig {
    /// Checks `1 <= h0 <= n - 1` against a concrete series.
    pub fn validate(&self, series: &SeriesMatrix) -> Result<()> {
        if self.h0 == 0 || self.h0 > series.n() - 1 {
            return Err(Error::InvalidLag {
                h: self.h0,
                n: series.n(),
            });
        }
        Ok(())
    }
}

/// Loads a series from a CSV file with rows as time points and columns as
/// variables; the result is transposed to the internal p x n layout.
///
/// With `has_header`, the first row becomes the variable labels.
pub fn load_series(path: &Path, has_header: bool) -> Result<SeriesMatrix> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let labels = if has_header {
        let headers = reader.headers().map_err(|e| Error::Parse {
            path: display.clone(),
            row: 1,
            col: 0,
            msg: e.to_string(),
        })?;
        Some(headers.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    } else {
        None
    };

    let header_offset = usize::from(has_header);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let file_row = idx + 1 + header_offset;
        let record = record.map_err(|e| Error::Parse {
            path: display.clone(),
            row: file_row,
            col: 0,
            msg: e.to_string(),
        })?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                path: display.clone(),
                row: file_row,
                col: record.len(),
                msg: format!("ragged row: {} cells, expected {}", record.len(), expected),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                row: file_row,
                col: j + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: display.clone(),
                    row: file_row,
                    col: j + 1,
                    msg: format!("non-finite value: {cell:?}"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }

    let n = rows.len();
    if n == 0 {
        return Err(Error::Empty(display));
    }
    let p = rows[0].len();
    if p == 0 {
        return Err(Error::Empty(display));
    }
    let labels = match labels {
        Some(l) if l.len() != p => {
            return Err(Error::Parse {
                path: display,
                row: 1,
                col: l.len(),
                msg: format!("header has {} fields but rows have {}", l.len(), p),
            })
        }
        other => other,
    };
    let mut values = Array2::zeros((p, n));
    for (t, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            values[[i, t]] = v;
        }
    }
    SeriesMatrix::new(values, labels)
}

/// Log-difference transform: entry (i, t) of the output is
/// `log s(i, t+1) - log s(i, t)`. Requires strictly positive input.
pub fn log_diff(series: &SeriesMatrix) -> Result<SeriesMatrix> {
    let x = series.values();
    if let Some(((i, t), &v)) = x.indexed_iter().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositiveEntry {
            var: i + 1,
            t: t + 1,
            value: v,
        });
    }
    let (p, n) = x.dim();
    let mut out = Array2::zeros((p, n - 1));
    for i in 0..p {
        for t in 0..n - 1 {
            out[[i, t]] = x[[i, t + 1]].ln() - x[[i, t]].ln();
        }
    }
    SeriesMatrix::new(out, series.labels.clone())
}

/// Removes each variable's sample mean.
pub fn demean(series: &SeriesMatrix) -> SeriesMatrix {
    let mut values = series.values().clone();
    for mut row in values.rows_mut() {
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
    }
    SeriesMatrix {
        values,
        labels: series.labels.clone(),
    }
}

/// Sample lagged autocovariance `1/(n-h) sum_t x_t x_{t+h}'` on the raw
/// values (no centering here; see [`build_m`] for the demeaning policy).
///
/// Not symmetric in general for `h >= 1`.
pub fn autocov(series: &SeriesMatrix, h: usize) -> Result<Array2<f64>> {
    let x = series.values();
    let n = x.ncols();
    if h > n - 1 {
        return Err(Error::InvalidLag { h, n });
    }
    let lead = x.slice(s![.., ..n - h]);
    let lag = x.slice(s![.., h..]);
    Ok(lead.dot(&lag.t()) / (n - h) as f64)
}

/// Pooled matrix `M = sum_{h=1}^{h0} Sigma_x(h) Sigma_x(h)'`.
///
/// When `cfg.demean` is set, the series is centered per variable first.
/// The result is exactly symmetric (averaged with its transpose) and
/// positive semidefinite up to roundoff.
pub fn build_m(series: &SeriesMatrix, cfg: &PooledCovConfig) -> Result<Array2<f64>> {
    cfg.validate(series)?;
    let centered;
    let working = if cfg.demean {
        centered = demean(series);
        &centered
    } else {
        series
    };
    let p = series.p();
    let mut m = Array2::zeros((p, p));
    for h in 1..=cfg.h0 {
        let g = autocov(working, h)?;
        m = m + g.dot(&g.t());
    }
    let m = (&m + &m.t()) / 2.0;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::io::Write;

    fn series(values: Array2<f64>) -> SeriesMatrix {
        SeriesMatrix::new(values, None).unwrap()
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_series_transposes_rows_to_variables() {
        let f = write_temp("1,2\n3,4\n5,6\n");
        let s = load_series(f.path(), false).unwrap();
        assert_eq!((s.p(), s.n()), (2, 3));
        assert_eq!(s.values()[[0, 0]], 1.0);
        assert_eq!(s.values()[[1, 2]], 6.0);
        assert!(s.labels().is_none());
    }

    #[test]
    fn load_series_header_becomes_labels() {
        let f = write_temp("a,b\n1,2\n3,4\n");
        let s = load_series(f.path(), true).unwrap();
        assert_eq!(s.labels().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn load_series_ragged_row_is_named() {
        let f = write_temp("1,2\n3\n5,6\n");
        let err = load_series(f.path(), false).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn load_series_non_numeric_cell_is_named() {
        let f = write_temp("1,2\n3,oops\n");
        let err = load_series(f.path(), false).unwrap_err();
        match err {
            Error::Parse { row, col, .. } => {
                assert_eq!((row, col), (2, 2));
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn load_series_empty_file_fails() {
        let f = write_temp("");
        assert!(matches!(load_series(f.path(), false), Err(Error::Empty(_))));
    }

    #[test]
    fn log_diff_of_exponential_is_constant() {
        let e = std::f64::consts::E;
        let s = series(array![[1.0, e, e * e]]);
        let d = log_diff(&s).unwrap();
        assert_eq!(d.n(), 2);
        assert_abs_diff_eq!(d.values()[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.values()[[0, 1]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_diff_of_constant_series_is_zero() {
        let s = series(array![[3.5, 3.5, 3.5]]);
        let d = log_diff(&s).unwrap();
        assert_abs_diff_eq!(d.values()[[0, 0]], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.values()[[0, 1]], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn log_diff_rejects_nonpositive_entry() {
        let s = series(array![[1.0, 0.0, 2.0]]);
        match log_diff(&s).unwrap_err() {
            Error::NonPositiveEntry { var, t, .. } => assert_eq!((var, t), (1, 2)),
            other => panic!("expected domain error, got {other}"),
        }
    }

    #[test]
    fn demean_subtracts_row_means() {
        let s = series(array![[1.0, 2.0, 3.0]]);
        let d = demean(&s);
        assert_eq!(d.values().row(0).to_vec(), vec![-1.0, 0.0, 1.0]);

        let s2 = series(array![[1.0, 1.0], [0.0, 2.0]]);
        let d2 = demean(&s2);
        assert_eq!(d2.values().row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(d2.values().row(1).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn demean_is_idempotent() {
        let s = series(array![[0.25, -1.5, 1.25], [4.0, 5.0, 9.0]]);
        let once = demean(&s);
        let twice = demean(&once);
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn autocov_matches_hand_computation() {
        let s = series(array![[1.0, 2.0, 3.0]]);
        let g = autocov(&s, 1).unwrap();
        // (1*2 + 2*3) / 2 = 4
        assert_abs_diff_eq!(g[[0, 0]], 4.0, epsilon = 1e-12);

        let s0 = series(array![[1.0, -1.0]]);
        let g0 = autocov(&s0, 0).unwrap();
        assert_abs_diff_eq!(g0[[0, 0]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn autocov_zero_series_is_zero() {
        let s = series(Array2::zeros((3, 5)));
        let g = autocov(&s, 2).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn autocov_rejects_lag_past_end() {
        let s = series(array![[1.0, 2.0, 3.0]]);
        assert!(matches!(autocov(&s, 3), Err(Error::InvalidLag { .. })));
    }

    #[test]
    fn build_m_matches_squared_autocov() {
        let s = series(array![[1.0, 2.0, 3.0]]);
        let cfg = PooledCovConfig { h0: 1, demean: false };
        let m = build_m(&s, &cfg).unwrap();
        assert_abs_diff_eq!(m[[0, 0]], 16.0, epsilon = 1e-12);
    }

    #[test]
    fn build_m_is_symmetric_psd() {
        let s = series(array![
            [1.0, 2.0, -1.0, 0.5, 3.0],
            [0.0, 1.5, 2.5, -2.0, 1.0],
            [4.0, -1.0, 0.0, 1.0, 2.0]
        ]);
        let cfg = PooledCovConfig { h0: 2, demean: true };
        let m = build_m(&s, &cfg).unwrap();
        let asym = (&m - &m.t()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(asym <= 1e-10);
        let eig = crate::spectral::top_r_eigvectors(&m, 3).unwrap();
        for &ev in eig.eigenvalues().unwrap() {
            assert!(ev >= -1e-10);
        }
    }

    #[test]
    fn autocov_on_demeaned_series_ignores_row_shifts() {
        let base = array![
            [1.0, 2.0, -1.0, 0.5, 3.0],
            [0.0, 1.5, 2.5, -2.0, 1.0]
        ];
        let mut shifted = base.clone();
        for v in shifted.row_mut(0).iter_mut() {
            *v += 7.25;
        }
        let g1 = autocov(&demean(&series(base)), 1).unwrap();
        let g2 = autocov(&demean(&series(shifted)), 1).unwrap();
        let scale = g1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn log_diff_then_demean_composes() {
        let s = series(array![[1.0, 2.0, 4.0, 8.0], [3.0, 9.0, 27.0, 81.0]]);
        let d = demean(&log_diff(&s).unwrap());
        assert_eq!(d.n(), 3);
        for row in d.values().rows() {
            let mean: f64 = row.sum() / row.len() as f64;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        }
    }
}
