//! Time-decomposed ADMM for the convexified allocation problem.
//!
//! The LMI couplings are moved onto slack copies `S` of the predicted and
//! filtered information, giving per-step X-updates (independent proximal
//! barrier solves), pairwise Z-updates (projections onto one LMI each) and a
//! scaled dual update. Each phase touches every step once, so an iteration
//! costs `O(H)`.

pub mod scaling;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::predict_information;
use crate::error::{Error, Result};
use crate::subsolver::{
    self, solve_zstep, BarrierSettings, ConvexSubproblem, PrimalPoint, Proximal, ZStepSettings,
};
use crate::symkernel::{min_eigenvalue, SpdMatrix, SymMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub rho: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iter: usize,
    /// Worker threads for the per-step fan-out; 0 uses the global pool.
    pub parallel_workers: usize,
    /// Residual balancing: double or halve `ρ` when one residual exceeds the other tenfold.
    pub adaptive_rho: bool,
    pub barrier: BarrierSettings,
    pub zstep: ZStepSettings,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1.0,
            eps_primal: 1e-5,
            eps_dual: 1e-5,
            max_iter: 500,
            parallel_workers: 0,
            adaptive_rho: false,
            barrier: BarrierSettings::default(),
            zstep: ZStepSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub rho: f64,
}

/// Per-iteration timing, the diagnostics rows of the scaling experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTiming {
    pub iteration: usize,
    pub steps: usize,
    pub x_ms: f64,
    pub z_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug)]
pub struct AdmmState {
    pub q_pred: Vec<SymMatrix>,
    pub q_filt: Vec<SymMatrix>,
    pub u: Vec<Vec<f64>>,
    pub s_pred: Vec<SymMatrix>,
    pub s_filt: Vec<SymMatrix>,
    pub d_pred: Vec<SymMatrix>,
    pub d_filt: Vec<SymMatrix>,
    pub rho: f64,
    /// Curvature normalization `κ`: the X-step penalty is `ρ·κ`, i.e. ADMM
    /// runs on the objective divided by `κ`.
    pub curvature: f64,
    pub iteration: usize,
    pub history: Vec<ResidualRow>,
}

#[derive(Clone, Debug)]
pub struct AdmmOutcome {
    pub state: AdmmState,
    pub converged: bool,
    /// Subproblem objective at the primal iterate with `Q_pred_0` at the boundary.
    pub objective: f64,
    pub timing: Vec<IterationTiming>,
}

fn boundary(problem: &ConvexSubproblem) -> Result<&SymMatrix> {
    problem
        .boundary
        .as_ref()
        .ok_or_else(|| Error::Config("ADMM needs a fixed boundary information".into()))
}

/// Largest second derivative of the step objectives along the
/// zero-attention chain: `w/λ_min(Q)² + 2λ_max(Θ)/λ_min(Q)³`, maximized over
/// steps. Makes `ρ` independent of the information scale and of `β`.
fn curvature_scale(problem: &ConvexSubproblem, chain: &[SpdMatrix]) -> f64 {
    problem
        .steps
        .iter()
        .zip(chain)
        .map(|(s, q)| {
            let lo = min_eigenvalue(q.as_sym());
            let theta_max = -min_eigenvalue(&s.theta.scale(-1.0));
            s.logdet_weight / (lo * lo) + 2.0 * theta_max / (lo * lo * lo)
        })
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
}

impl AdmmState {
    /// Zero-attention chain for primal and slack variables, zero duals.
    pub fn init(problem: &ConvexSubproblem, rho: f64) -> Result<Self> {
        problem.validate()?;
        if problem.couplings.len() + 1 != problem.steps.len() {
            return Err(Error::Config("ADMM needs one coupling per consecutive step pair".into()));
        }
        let mut pred = vec![SpdMatrix::new(boundary(problem)?.clone())?];
        for c in &problem.couplings {
            let last = pred.last().unwrap();
            pred.push(predict_information(last, &c.a, &c.w)?);
        }
        let curvature = curvature_scale(problem, &pred);
        let q: Vec<SymMatrix> = pred.into_iter().map(SpdMatrix::into_sym).collect();
        let n = problem.state_dim;
        let zeros = vec![SymMatrix::zeros(n); q.len()];
        Ok(AdmmState {
            q_pred: q.clone(),
            q_filt: q.clone(),
            u: problem.steps.iter().map(|s| vec![0.0; s.caps.len()]).collect(),
            s_pred: q.clone(),
            s_filt: q,
            d_pred: zeros.clone(),
            d_filt: zeros,
            rho,
            curvature,
            iteration: 0,
            history: Vec::new(),
        })
    }

    /// `max_k max(‖Q_pred_k − S_pred_k‖, ‖Q_filt_k − S_filt_k‖)`.
    pub fn primal_residual(&self) -> f64 {
        self.q_pred
            .iter()
            .zip(&self.s_pred)
            .chain(self.q_filt.iter().zip(&self.s_filt))
            .map(|(q, s)| q.sub(s).frobenius_norm())
            .fold(0.0, f64::max)
    }

    /// Primal point with the consensus boundary substituted at step 0.
    pub fn point(&self, problem: &ConvexSubproblem) -> PrimalPoint {
        let mut q_pred = self.q_pred.clone();
        if let Some(b) = &problem.boundary {
            q_pred[0] = b.clone();
        }
        PrimalPoint { q_pred, u: self.u.clone() }
    }
}

/// Per-step proximal problems of the X-update, solved independently.
pub fn x_update(state: &mut AdmmState, problem: &ConvexSubproblem, cfg: &AdmmConfig) -> Result<()> {
    let results: Vec<_> = (0..problem.steps.len())
        .into_par_iter()
        .map(|k| {
            let mut block = problem.steps[k].clone();
            block.prox = Some(Proximal {
                rho: state.rho * state.curvature,
                pred_target: state.s_pred[k].sub(&state.d_pred[k]),
                filt_target: state.s_filt[k].sub(&state.d_filt[k]),
            });
            let single = ConvexSubproblem {
                state_dim: problem.state_dim,
                steps: vec![block],
                couplings: Vec::new(),
                boundary: None,
            };
            let start = PrimalPoint { q_pred: vec![state.q_pred[k].clone()], u: vec![state.u[k].clone()] };
            subsolver::solve_from(&single, &cfg.barrier, Some(&start))
                .map_err(|e| Error::StepFailure { step: k, source: Box::new(e) })
        })
        .collect();
    for (k, r) in results.into_iter().enumerate() {
        let mut sol = r?;
        state.q_pred[k] = sol.point.q_pred.pop().unwrap();
        state.u[k] = sol.point.u.pop().unwrap();
        state.q_filt[k] = sol.q_filt.pop().unwrap();
    }
    Ok(())
}

/// Pairwise projections of `Q + D` onto the LMI set. Returns the dual
/// residual `ρ·max_k ‖S⁺ − S‖`.
pub fn z_update(state: &mut AdmmState, problem: &ConvexSubproblem, cfg: &AdmmConfig) -> Result<f64> {
    let pred: Vec<SymMatrix> = state.q_pred.iter().zip(&state.d_pred).map(|(q, d)| q.add(d)).collect();
    let filt: Vec<SymMatrix> = state.q_filt.iter().zip(&state.d_filt).map(|(q, d)| q.add(d)).collect();
    let (s_pred, s_filt) = solve_zstep(&pred, &filt, &problem.couplings, boundary(problem)?, &cfg.zstep)?;
    let change = s_pred
        .iter()
        .zip(&state.s_pred)
        .chain(s_filt.iter().zip(&state.s_filt))
        .map(|(a, b)| a.sub(b).frobenius_norm())
        .fold(0.0, f64::max);
    state.s_pred = s_pred;
    state.s_filt = s_filt;
    Ok(state.rho * change)
}

/// `D ← D + Q − S` for both families; returns the primal residual.
pub fn dual_update(state: &mut AdmmState) -> f64 {
    for k in 0..state.d_pred.len() {
        state.d_pred[k] = state.d_pred[k].add(&state.q_pred[k].sub(&state.s_pred[k]));
        state.d_filt[k] = state.d_filt[k].add(&state.q_filt[k].sub(&state.s_filt[k]));
    }
    state.primal_residual()
}

fn rebalance(state: &mut AdmmState, primal: f64, dual: f64) {
    let factor = if primal > 10.0 * dual {
        2.0
    } else if dual > 10.0 * primal {
        0.5
    } else {
        return;
    };
    state.rho *= factor;
    // scaled duals carry 1/ρ
    for d in state.d_pred.iter_mut().chain(state.d_filt.iter_mut()) {
        *d = d.scale(1.0 / factor);
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs ADMM to the configured tolerances, optionally continuing from a
/// previous state (slacks and duals carry over; the linearization may differ).
///
/// Reaching `max_iter` is not an error: the last iterate is returned with
/// `converged = false`.
pub fn run(problem: &ConvexSubproblem, cfg: &AdmmConfig, warm: Option<AdmmState>) -> Result<AdmmOutcome> {
    if !(cfg.rho > 0.0 && cfg.eps_primal > 0.0 && cfg.eps_dual > 0.0) {
        return Err(Error::Config("ADMM needs positive rho and tolerances".into()));
    }
    let mut state = match warm {
        Some(s) if s.q_pred.len() == problem.steps.len() => {
            problem.validate()?;
            AdmmState { iteration: 0, history: Vec::new(), ..s }
        }
        _ => AdmmState::init(problem, cfg.rho)?,
    };
    let body = |state: &mut AdmmState| -> Result<(bool, Vec<IterationTiming>)> {
        let mut timing = Vec::new();
        for it in 1..=cfg.max_iter {
            let t0 = Instant::now();
            x_update(state, problem, cfg)?;
            let x_ms = ms(t0);
            let t1 = Instant::now();
            let dual = z_update(state, problem, cfg)?;
            let z_ms = ms(t1);
            let primal = dual_update(state);
            state.iteration = it;
            state.history.push(ResidualRow { iteration: it, primal, dual, rho: state.rho });
            timing.push(IterationTiming { iteration: it, steps: problem.steps.len(), x_ms, z_ms, total_ms: ms(t0) });
            if primal <= cfg.eps_primal && dual <= cfg.eps_dual {
                return Ok((true, timing));
            }
            if cfg.adaptive_rho {
                rebalance(state, primal, dual);
            }
        }
        Ok((false, timing))
    };
    let (converged, timing) = if cfg.parallel_workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel_workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| body(&mut state))?
    } else {
        body(&mut state)?
    };
    let objective = subsolver::objective(problem, &state.point(problem)).unwrap_or(f64::NAN);
    Ok(AdmmOutcome { state, converged, objective, timing })
}
