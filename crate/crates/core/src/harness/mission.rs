//! Receding-horizon closed loop: allocate, measure, filter, control, step.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::allocator::{ccp_solve, directed_info_terms, SubsolverMethod};
use crate::baselines::{greedy_select, selection_attention};
use crate::error::{Error, Result};
use crate::filter::{self, AttentionVector, Belief};
use crate::harness::config::{Method, ScenarioConfig};
use crate::harness::rng::GaussianStream;
use crate::harness::scenario::Scenario;
use crate::lqg::{control, expected_cost};
use crate::plant::{measure, step_dynamics, wrap_angle, ControlInput, RobotState};
use crate::symkernel::{SpdMatrix, SymMatrix};

/// Fraction of the cap above which a landmark counts as active.
pub const ACTIVE_FRACTION: f64 = 0.05;

/// Everything recorded at one mission step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t_sec: f64,
    pub truth: RobotState,
    pub reference: RobotState,
    /// Filtered estimate `x_ref + x̂_{t|t}`.
    pub estimate: RobotState,
    /// `P_{t|t}`.
    pub covariance: SymMatrix,
    /// `Q_{t|t−1}` and `Q_{t|t}` as used by the filter.
    pub q_pred: SymMatrix,
    pub q_filt: SymMatrix,
    /// Applied attention `u*_t`.
    pub u: Vec<f64>,
    pub di_bits: f64,
    pub track_err_m: f64,
    pub command: ControlInput,
    pub ccp_iters: usize,
    pub admm_iters: usize,
    /// Window objective after each accepted CCP iteration, starting from the initial chain.
    pub ccp_history: Vec<f64>,
    /// Allocation wall time; zero unless `record_wall_time` is set.
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    /// Resolved configuration the run was produced from.
    pub config: ScenarioConfig,
    pub caps: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Allocation-independent part of the expected LQG cost.
    pub constant_cost: f64,
    /// Allocation-dependent part, `Σ Tr(Θ_t P_{t|t})`.
    pub variable_cost: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub rms_error_m: f64,
    pub total_di_bits: f64,
    pub mean_active_landmarks: f64,
    pub variable_cost: f64,
    pub constant_cost: f64,
    pub wall_ms: f64,
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn landmark_count(&self) -> usize {
        self.caps.len()
    }

    /// Indices of landmarks above `fraction` of their cap at `step`.
    pub fn active_at(&self, step: usize, fraction: f64) -> Vec<usize> {
        AttentionVector { u: self.steps[step].u.clone(), vhat_inv: self.caps.clone() }.active(fraction)
    }

    pub fn summary(&self) -> SummaryStats {
        let n = self.steps.len().max(1) as f64;
        SummaryStats {
            rms_error_m: (self.steps.iter().map(|s| s.track_err_m.powi(2)).sum::<f64>() / n).sqrt(),
            total_di_bits: self.steps.iter().map(|s| s.di_bits).sum(),
            mean_active_landmarks: (0..self.steps.len())
                .map(|k| self.active_at(k, ACTIVE_FRACTION).len() as f64)
                .sum::<f64>()
                / n,
            variable_cost: self.variable_cost,
            constant_cost: self.constant_cost,
            wall_ms: self.steps.iter().map(|s| s.wall_ms).sum(),
        }
    }
}

/// Per-step allocation result.
struct Allocation {
    u: AttentionVector,
    ccp_iters: usize,
    admm_iters: usize,
    ccp_history: Vec<f64>,
}

fn allocate(scenario: &Scenario, t: usize, q_pred: &SpdMatrix) -> Result<Allocation> {
    let cfg = &scenario.config;
    let caps = scenario.vhat_inv.clone();
    let simple = |u| Ok(Allocation { u, ccp_iters: 0, admm_iters: 0, ccp_history: Vec::new() });
    match cfg.allocation.method {
        Method::None => simple(AttentionVector::zeros(caps)),
        Method::Full => simple(AttentionVector::full(caps)),
        Method::Greedy => {
            let picks = greedy_select(
                q_pred,
                scenario.tape.theta_at(t),
                &scenario.ltv.c[t],
                &caps,
                cfg.allocation.greedy_budget,
            )?;
            simple(selection_attention(&picks, &caps))
        }
        Method::CcpCentralized | Method::CcpAdmm => {
            let mut ccp = cfg.solver.ccp.clone();
            ccp.method = if cfg.allocation.method == Method::CcpAdmm {
                SubsolverMethod::Admm
            } else {
                SubsolverMethod::Centralized
            };
            let problem = scenario.window_problem(t, cfg.allocation.horizon, q_pred.clone(), cfg.allocation.beta)?;
            let sol = ccp_solve(&problem, &ccp)?;
            // receding horizon: only the first entry of the plan is applied
            let u = sol.u_star.into_iter().next().expect("window has at least one step");
            Ok(Allocation { u, ccp_iters: sol.ccp_iterations, admm_iters: sol.admm_iterations, ccp_history: sol.history })
        }
    }
}

/// Runs a mission and returns whatever was logged before a failure together
/// with the failure, if any.
pub fn run_mission_partial(cfg: &ScenarioConfig) -> (RunLog, Option<Error>) {
    let scenario = match Scenario::new(cfg) {
        Ok(s) => s,
        Err(e) => {
            let log = RunLog {
                config: cfg.resolved(),
                caps: cfg.resolved_vhat_inv(),
                steps: Vec::new(),
                constant_cost: 0.0,
                variable_cost: 0.0,
            };
            return (log, Some(e));
        }
    };
    run_scenario(&scenario)
}

/// Runs a mission; errors carry the step at which they occurred.
pub fn run_mission(cfg: &ScenarioConfig) -> Result<RunLog> {
    match run_mission_partial(cfg) {
        (log, None) => Ok(log),
        (_, Some(e)) => Err(e),
    }
}

/// Closed loop on a prepared scenario.
pub fn run_scenario(scenario: &Scenario) -> (RunLog, Option<Error>) {
    let cfg = &scenario.config;
    let mut log = RunLog {
        config: cfg.clone(),
        caps: scenario.vhat_inv.clone(),
        steps: Vec::with_capacity(scenario.steps()),
        constant_cost: 0.0,
        variable_cost: 0.0,
    };
    let mut filtered_info = Vec::with_capacity(scenario.steps());
    let error = mission_loop(scenario, &mut log, &mut filtered_info).err();
    let (variable, constant) = expected_cost(&scenario.tape, &filtered_info, &scenario.w, &scenario.p_init);
    log.variable_cost = variable;
    log.constant_cost = constant;
    (log, error)
}

fn mission_loop(scenario: &Scenario, log: &mut RunLog, filtered_info: &mut Vec<SpdMatrix>) -> Result<()> {
    let cfg = &scenario.config;
    let steps = scenario.steps();
    let dt = cfg.reference.dt;
    let w_diag = cfg.noise.w_diag;
    let mut rng = GaussianStream::new(cfg.rng_seed);
    let at = |step: usize| move |e: Error| Error::Mission { step, source: Box::new(e) };

    let p_init: Vec<f64> = cfg.p_init_diag.to_vec();
    let x0_dev = DVector::from_vec(rng.gaussian_diag(&p_init));
    let mut truth = scenario.reference.states[0].offset(&x0_dev);
    let mut belief = Belief::predicted(DVector::zeros(3), scenario.initial_information());

    for t in 0..steps {
        let reference = scenario.reference.states[t];
        let started = Instant::now();
        let alloc = allocate(scenario, t, &belief.info).map_err(at(t))?;
        let wall_ms = if cfg.record_wall_time { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 };

        // one draw per landmark every step keeps the stream independent of the allocation
        let unit: Vec<f64> = (0..alloc.u.len()).map(|_| rng.next_gaussian()).collect();
        let noise: Vec<f64> =
            unit.iter().zip(&alloc.u.u).map(|(z, &u)| if u > 0.0 { z / u.sqrt() } else { 0.0 }).collect();
        let y = measure(&truth, &scenario.landmarks, &noise).map_err(at(t))?;
        let y_ref = measure(&reference, &scenario.landmarks, &vec![0.0; noise.len()]).map_err(at(t))?;
        let y_dev = y.zip_map(&y_ref, |a, b| wrap_angle(a - b));
        let q_pred = belief.info.clone();
        let post = filter::update(&belief, &y_dev, &scenario.ltv.c[t], &alloc.u).map_err(at(t))?;

        let u_ref = scenario.reference.input_at(t);
        let du = control(&scenario.tape.k[t], &post.mean);
        let command = ControlInput { v: u_ref.v + du[0], omega: u_ref.omega + du[1] };
        let estimate = reference.offset(&post.mean);
        let di_bits = directed_info_terms(std::slice::from_ref(&post.info), std::slice::from_ref(&q_pred))[0];

        log.steps.push(StepRecord {
            step: t,
            t_sec: t as f64 * dt,
            truth,
            reference,
            estimate,
            covariance: post.covariance().into_sym(),
            q_pred: q_pred.into_sym(),
            q_filt: post.info.as_sym().clone(),
            u: alloc.u.u.clone(),
            di_bits,
            track_err_m: (truth.x - reference.x).hypot(truth.y - reference.y),
            command,
            ccp_iters: alloc.ccp_iters,
            admm_iters: alloc.admm_iters,
            ccp_history: alloc.ccp_history,
            wall_ms,
        });
        filtered_info.push(post.info.clone());

        if t + 1 == steps {
            break;
        }
        let process = rng.gaussian_diag(&w_diag);
        truth = step_dynamics(&truth, &command, dt, [process[0], process[1], process[2]]);
        let du_vec = DVector::from_column_slice(&[command.v - u_ref.v, command.omega - u_ref.omega]);
        belief = filter::predict(&post, &scenario.ltv.a[t], &scenario.ltv.b[t], &du_vec, &scenario.w).map_err(at(t))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub runs: Vec<SummaryStats>,
    pub mean: SummaryStats,
    pub std: SummaryStats,
}

fn fields(s: &SummaryStats) -> [f64; 6] {
    [s.rms_error_m, s.total_di_bits, s.mean_active_landmarks, s.variable_cost, s.constant_cost, s.wall_ms]
}

fn from_fields(f: [f64; 6]) -> SummaryStats {
    SummaryStats {
        rms_error_m: f[0],
        total_di_bits: f[1],
        mean_active_landmarks: f[2],
        variable_cost: f[3],
        constant_cost: f[4],
        wall_ms: f[5],
    }
}

/// Independent runs with seeds `rng_seed + i`, aggregated as mean and
/// population standard deviation per metric.
pub fn monte_carlo(cfg: &ScenarioConfig, n_runs: usize) -> Result<MonteCarloSummary> {
    use rayon::prelude::*;
    if n_runs == 0 {
        return Err(Error::Config("monte carlo needs at least one run".into()));
    }
    let runs: Vec<SummaryStats> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seeded = ScenarioConfig { rng_seed: cfg.rng_seed.wrapping_add(i as u64), ..cfg.clone() };
            run_mission(&seeded).map(|log| log.summary())
        })
        .collect::<Result<_>>()?;
    let n = n_runs as f64;
    let mut mean = [0.0; 6];
    for r in &runs {
        for (m, v) in mean.iter_mut().zip(fields(r)) {
            *m += v / n;
        }
    }
    let mut var = [0.0; 6];
    for r in &runs {
        for ((s, v), m) in var.iter_mut().zip(fields(r)).zip(mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    Ok(MonteCarloSummary { runs, mean: from_fields(mean), std: from_fields(var.map(f64::sqrt)) })
}
