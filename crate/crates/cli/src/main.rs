//! Command-line front end: estimation on user data, Monte Carlo experiment
//! reproduction, and report emission.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sparsefactor::admm::estimate_q;
use sparsefactor::selection::{bic, recover_factors};
use sparsefactor::{
    demean, estimate_loading_space, lambda_grid, load_series, log_diff, run_experiment,
    select_lambda, AdmmOptions, Basis, Error, FactorModelFit, Method, PenaltySpec,
    PooledCovConfig, SeriesMatrix, SimDesign,
};

#[derive(Parser)]
#[command(
    name = "sparsefactor",
    version,
    about = "Sparse factor loadings for high-dimensional time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate sparse loadings from a CSV panel
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment from a JSON design
    Simulate(SimulateArgs),
    /// Group estimated factors by calendar month for plotting
    FactorsReport(ReportArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV: rows are time points, columns are variables
    #[arg(long)]
    input: PathBuf,
    /// Treat the first row as variable names
    #[arg(long)]
    has_header: bool,
    /// Number of factors
    #[arg(long)]
    r: usize,
    /// Maximum lag pooled into the spectral matrix
    #[arg(long, default_value_t = 1)]
    h0: usize,
    /// Apply a log-difference transform first (requires positive data)
    #[arg(long)]
    log_diff: bool,
    /// Disable the per-variable mean removal that is on by default
    #[arg(long)]
    no_demean: bool,
    /// Fixed penalty weight; omit to select by BIC over a grid
    #[arg(long)]
    lambda: Option<f64>,
    /// Grid size for BIC selection
    #[arg(long, default_value_t = 50)]
    grid_count: usize,
    /// Smallest grid value as a fraction of the largest
    #[arg(long, default_value_t = 1e-3)]
    grid_min_ratio: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON design file (fields: p, n, r, delta, sparsity, seed, reps)
    #[arg(long)]
    config: PathBuf,
    /// Override the design's replicate count
    #[arg(long)]
    reps: Option<usize>,
    /// Override the design's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated methods: eigen, varimax1, varimax2, sparse
    #[arg(long, default_value = "eigen,varimax1,varimax2,sparse")]
    methods: String,
    /// Maximum lag pooled into the spectral matrix
    #[arg(long, default_value_t = 1)]
    h0: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// factors.csv produced by the estimate command
    #[arg(long)]
    factors: PathBuf,
    /// File with one ISO date (YYYY-MM or YYYY-MM-DD) per time point
    #[arg(long)]
    dates: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::FactorsReport(args) => cmd_factors_report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for data/configuration problems, 3 for numeric failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Empty(_)
        | Error::InvalidSeries(_)
        | Error::NonPositiveEntry { .. }
        | Error::InvalidLag { .. }
        | Error::InvalidRank { .. }
        | Error::ShapeMismatch { .. }
        | Error::Design(_)
        | Error::Config(_) => 2,
        Error::NotSymmetric { .. }
        | Error::Eigen(_)
        | Error::RankDeficient { .. }
        | Error::DegenerateDirection { .. }
        | Error::Domain(_)
        | Error::SingularFit { .. }
        | Error::Selection(_) => 3,
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn ensure_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// RFC 4180 quoting for a single field.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest round-trip float formatting; zeros come out as a literal 0.
fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

#[derive(Serialize)]
struct ColumnReport {
    converged: bool,
    iterations: usize,
    residual: f64,
    lambda: f64,
    fallback: bool,
    zero_column: bool,
    support_size: usize,
}

#[derive(Serialize)]
struct FitReport {
    schema_version: u32,
    p: usize,
    n: usize,
    r: usize,
    h0: usize,
    demean: bool,
    log_diff: bool,
    lambda: f64,
    /// Absent when the residual degenerated (BIC has no finite value).
    bic: Option<f64>,
    nonzero_count: usize,
    eigenvalues: Vec<f64>,
    columns: Vec<ColumnReport>,
}

fn fit_at_fixed_lambda(
    series: &SeriesMatrix,
    basis: &Basis,
    lambda: f64,
    opts: &AdmmOptions,
) -> Result<FactorModelFit, Error> {
    let spec = PenaltySpec {
        lambda,
        gamma: opts.gamma,
    };
    let est = estimate_q(basis, spec, opts)?;
    let bic_val = bic(series, &est.loading)?;
    let factors = recover_factors(&est.loading, series)?;
    Ok(FactorModelFit {
        loading: est.loading,
        factors,
        bic: bic_val,
        lambda,
        diagnostics: est.columns,
    })
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), Error> {
    let raw = load_series(&args.input, args.has_header)?;
    let series = if args.log_diff { log_diff(&raw)? } else { raw };
    let use_demean = !args.no_demean;
    let cfg = PooledCovConfig {
        h0: args.h0,
        demean: use_demean,
    };
    let basis = estimate_loading_space(&series, &cfg, args.r)?;
    let scored = if use_demean { demean(&series) } else { series.clone() };
    let opts = AdmmOptions::default();
    let fit = match args.lambda {
        Some(lambda) => fit_at_fixed_lambda(&scored, &basis, lambda, &opts)?,
        None => {
            let grid = lambda_grid(&basis, args.grid_count, args.grid_min_ratio)?;
            select_lambda(&scored, &basis, &grid, &opts)?
        }
    };

    ensure_dir(&args.out)?;
    let p = series.p();
    let n = series.n();
    let r = args.r;

    let mut loadings = String::from("variable");
    for j in 1..=r {
        let _ = write!(loadings, ",factor_{j}");
    }
    loadings.push('\n');
    for i in 0..p {
        loadings.push_str(&csv_field(&series.label(i)));
        for j in 0..r {
            let _ = write!(loadings, ",{}", fmt_num(fit.loading.q()[[i, j]]));
        }
        loadings.push('\n');
    }
    write_file(&args.out.join("loadings.csv"), &loadings)?;

    let mut factors = String::from("factor");
    for t in 1..=n {
        let _ = write!(factors, ",{t}");
    }
    factors.push('\n');
    for j in 0..r {
        let _ = write!(factors, "{}", j + 1);
        for t in 0..n {
            let _ = write!(factors, ",{}", fmt_num(fit.factors[[j, t]]));
        }
        factors.push('\n');
    }
    write_file(&args.out.join("factors.csv"), &factors)?;

    let mut heatmap = String::from("variable,factor,value\n");
    for i in 0..p {
        for j in 0..r {
            let _ = writeln!(
                heatmap,
                "{},{},{}",
                csv_field(&series.label(i)),
                j + 1,
                fmt_num(fit.loading.q()[[i, j]])
            );
        }
    }
    write_file(&args.out.join("loading_heatmap.csv"), &heatmap)?;

    let report = FitReport {
        schema_version: 1,
        p,
        n,
        r,
        h0: args.h0,
        demean: use_demean,
        log_diff: args.log_diff,
        lambda: fit.lambda,
        bic: fit.bic.is_finite().then_some(fit.bic),
        nonzero_count: fit.loading.nonzero_count(),
        eigenvalues: basis.eigenvalues().unwrap_or_default().to_vec(),
        columns: fit
            .diagnostics
            .iter()
            .zip(fit.loading.supports())
            .map(|(d, s)| ColumnReport {
                converged: d.converged,
                iterations: d.iterations,
                residual: d.residual,
                lambda: d.lambda,
                fallback: d.fallback,
                zero_column: d.zero_column,
                support_size: s.len(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&args.out.join("fit.json"), &(json + "\n"))?;

    println!(
        "estimated {r} factors on a {p} x {n} panel: lambda = {}, {} nonzero loadings",
        fit.lambda,
        fit.loading.nonzero_count()
    );
    Ok(())
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    design: &'a SimDesign,
    h0: usize,
    methods: Vec<String>,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let mut design = SimDesign::from_json_file(&args.config)?;
    if let Some(reps) = args.reps {
        design.reps = reps;
    }
    if let Some(seed) = args.seed {
        design.seed = seed;
    }
    design.validate()?;
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Method::from_str)
        .collect::<Result<_, _>>()?;

    let summary = run_experiment(&design, &methods, args.h0)?;

    ensure_dir(&args.out)?;
    write_file(&args.out.join("summary.csv"), &summary.to_csv_string())?;
    write_file(&args.out.join("summary.txt"), &summary.to_text_table())?;
    let echo = ConfigEcho {
        design: &design,
        h0: args.h0,
        methods: methods.iter().map(|m| m.label().to_string()).collect(),
    };
    let json = serde_json::to_string_pretty(&echo).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&args.out.join("config_echo.json"), &(json + "\n"))?;

    print!("{}", summary.to_text_table());
    Ok(())
}

fn parse_month(raw: &str) -> Option<u32> {
    let mut parts = raw.trim().split('-');
    let year = parts.next()?;
    if year.len() != 4 || year.parse::<u32>().is_err() {
        return None;
    }
    let month: u32 = parts.next()?.parse().ok()?;
    if !(1..=12).contains(&month) {
        return None;
    }
    match parts.next() {
        None => Some(month),
        Some(day) => {
            let d: u32 = day.parse().ok()?;
            (1..=31).contains(&d).then_some(month)
        }
    }
}

fn cmd_factors_report(args: &ReportArgs) -> Result<(), Error> {
    let read = |path: &Path| -> Result<String, Error> {
        std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    };

    // factors.csv: header row, then one row per factor: index,v1,...,vn.
    let factors_text = read(&args.factors)?;
    let factors_path = args.factors.display().to_string();
    let mut rows = Vec::new();
    for (idx, line) in factors_text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 2 {
            return Err(Error::Parse {
                path: factors_path.clone(),
                row: idx + 1,
                col: cells.len(),
                msg: "expected a factor index followed by values".into(),
            });
        }
        let mut values = Vec::with_capacity(cells.len() - 1);
        for (j, cell) in cells[1..].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: factors_path.clone(),
                row: idx + 1,
                col: j + 2,
                msg: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Empty(factors_path));
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidSeries(
            "factor rows have unequal lengths".into(),
        ));
    }

    // Dates: one per time point, optional single header line.
    let dates_text = read(&args.dates)?;
    let dates_path = args.dates.display().to_string();
    let lines: Vec<(usize, &str)> = dates_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let skip_header =
        lines.len() == n + 1 && parse_month(lines[0].1.split(',').next().unwrap_or("")).is_none();
    let date_lines = &lines[usize::from(skip_header)..];
    if date_lines.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} dates"),
            actual: format!("{}", date_lines.len()),
        });
    }
    let mut months = Vec::with_capacity(n);
    for (line_no, line) in date_lines {
        let cell = line.split(',').next().unwrap_or("");
        let month = parse_month(cell).ok_or_else(|| Error::Parse {
            path: dates_path.clone(),
            row: line_no + 1,
            col: 1,
            msg: format!("not an ISO date (YYYY-MM or YYYY-MM-DD): {cell:?}"),
        })?;
        months.push(month);
    }

    let mut out = String::from("month,factor,value\n");
    for month in 1..=12u32 {
        for (j, row) in rows.iter().enumerate() {
            for (t, &m) in months.iter().enumerate() {
                if m == month {
                    let _ = writeln!(out, "{},{},{}", month, j + 1, fmt_num(row[t]));
                }
            }
        }
    }
    ensure_dir(&args.out)?;
    write_file(&args.out.join("factors_by_month.csv"), &out)?;
    let groups: std::collections::BTreeSet<u32> = months.iter().copied().collect();
    println!(
        "grouped {} time points into {} month groups across {} factors",
        n,
        groups.len(),
        rows.len()
    );
    Ok(())
}
