//! Per-iteration cost of ADMM against a centralized solve as the window grows.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{run, AdmmConfig};
use crate::allocator::{feasible_init, linearized_subproblem};
use crate::error::{Error, Result};
use crate::harness::{Scenario, ScenarioConfig};
use crate::subsolver::{self, BarrierSettings, ConvexSubproblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub horizon: usize,
    /// Median wall time of one single-worker ADMM iteration.
    pub admm_ms_per_iter: f64,
    pub admm_iterations: usize,
    /// Centralized barrier solve time; `None` when it hit the time limit.
    pub centralized_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSettings {
    /// ADMM iterations timed per horizon.
    pub admm_iterations: usize,
    /// Per-solve limit for the centralized path; once hit, longer windows are skipped.
    pub centralized_limit_s: f64,
    pub beta: f64,
}

impl Default for ScalingSettings {
    fn default() -> Self {
        ScalingSettings { admm_iterations: 10, centralized_limit_s: 120.0, beta: 18.0 }
    }
}

/// First CCP subproblem of the reference scenario's window at `t = 0`.
pub fn scaling_subproblem(horizon: usize, beta: f64) -> Result<ConvexSubproblem> {
    let cfg = ScenarioConfig::default();
    if horizon + 1 > cfg.reference.steps {
        return Err(Error::Config(format!("horizon {horizon} exceeds the mission length")));
    }
    let s = Scenario::new(&cfg)?;
    let p = s.window_problem(0, horizon, s.initial_information(), beta)?;
    let init = feasible_init(&p)?;
    linearized_subproblem(&p, &init.q_filt)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times a fixed number of single-worker ADMM iterations and one centralized
/// solve at every horizon.
pub fn scaling_sweep(horizons: &[usize], settings: &ScalingSettings) -> Result<Vec<ScalingPoint>> {
    if settings.admm_iterations == 0 {
        return Err(Error::Config("scaling sweep needs at least one ADMM iteration".into()));
    }
    // tolerances no iterate can meet, so every run does the same work
    let admm = AdmmConfig {
        parallel_workers: 1,
        max_iter: settings.admm_iterations,
        eps_primal: f64::MIN_POSITIVE,
        eps_dual: f64::MIN_POSITIVE,
        ..AdmmConfig::default()
    };
    let barrier = BarrierSettings { time_limit_s: Some(settings.centralized_limit_s), ..BarrierSettings::default() };
    let mut timed_out = false;
    let mut out = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let sub = scaling_subproblem(h, settings.beta)?;
        let res = run(&sub, &admm, None)?;
        let admm_ms_per_iter = median(res.timing.iter().map(|t| t.total_ms).collect());
        let centralized_ms = if timed_out {
            None
        } else {
            let start = Instant::now();
            match subsolver::solve(&sub, &barrier) {
                Ok(_) => Some(start.elapsed().as_secs_f64() * 1e3),
                Err(Error::TimeLimit { .. }) => {
                    timed_out = true;
                    None
                }
                Err(e) => return Err(e),
            }
        };
        out.push(ScalingPoint { horizon: h, admm_ms_per_iter, admm_iterations: res.state.iteration, centralized_ms });
    }
    Ok(out)
}
