//! Shared fixtures for the solver benchmarks.

use diattn::admm::scaling::scaling_subproblem;
use diattn::admm::AdmmConfig;
use diattn::subsolver::ConvexSubproblem;

/// Horizons swept by the benchmarks.
pub const HORIZONS: [usize; 3] = [5, 10, 20];

/// First CCP subproblem of the reference scenario at `β = 18`.
pub fn window(horizon: usize) -> ConvexSubproblem {
    scaling_subproblem(horizon, 18.0).expect("reference scenario window")
}

/// Single-worker ADMM that runs exactly `iterations` iterations.
pub fn fixed_admm(iterations: usize) -> AdmmConfig {
    AdmmConfig {
        parallel_workers: 1,
        max_iter: iterations,
        eps_primal: f64::MIN_POSITIVE,
        eps_dual: f64::MIN_POSITIVE,
        ..AdmmConfig::default()
    }
}
