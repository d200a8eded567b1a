// Scratch diagnostics for ADMM iteration counts across the lambda grid.
use sparsefactor::admm::estimate_q;
use sparsefactor::selection::{lambda_grid, DEFAULT_GRID_COUNT, DEFAULT_GRID_MIN_RATIO};
use sparsefactor::sim::{replicate_rng, simulate_dataset, SimDesign, Sparsity};
use sparsefactor::{estimate_loading_space, AdmmOptions, PenaltySpec, PooledCovConfig};

fn main() {
    let design = SimDesign {
        p: 20,
        n: 100,
        r: 3,
        delta: 0.0,
        sparsity: Sparsity::FractionBlocks { fraction: 0.4 },
        seed: 20260809,
        reps: 1,
        noise_scale: 1.0,
    };
    let mut rng = replicate_rng(design.seed, 0);
    let (series, _a) = simulate_dataset(&design, &mut rng).unwrap();
    let cfg = PooledCovConfig::default();
    let basis = estimate_loading_space(&series, &cfg, 3).unwrap();
    let grid = lambda_grid(&basis, DEFAULT_GRID_COUNT, DEFAULT_GRID_MIN_RATIO).unwrap();
    let opts = AdmmOptions::default();
    let start = std::time::Instant::now();
    for (i, &lambda) in grid.iter().enumerate() {
        let spec = PenaltySpec { lambda, gamma: 3.0 };
        let est = estimate_q(&basis, spec, &opts).unwrap();
        let iters: Vec<usize> = est.columns.iter().map(|c| c.iterations).collect();
        let conv: Vec<bool> = est.columns.iter().map(|c| c.converged).collect();
        let res: Vec<f64> = est.columns.iter().map(|c| c.residual).collect();
        println!(
            "grid[{i:2}] lambda={lambda:.5} iters={iters:?} conv={conv:?} res={res:.2e?} nnz={}",
            est.loading.nonzero_count()
        );
    }
    println!("total: {:?}", start.elapsed());
}
