//! Mission-wide model data derived once from a configuration.

use crate::allocator::WindowProblem;
use crate::error::{Error, Result};
use crate::harness::config::ScenarioConfig;
use crate::lqg::{backward_riccati, CostWeights, RiccatiTape};
use crate::plant::{linearize, reference_circle, Landmark, LtvWindow, ReferenceTrajectory, RobotState};
use crate::symkernel::SpdMatrix;

#[derive(Clone, Debug)]
pub struct Scenario {
    /// Resolved configuration.
    pub config: ScenarioConfig,
    pub reference: ReferenceTrajectory,
    pub landmarks: Vec<Landmark>,
    /// Linearization about the reference over the whole mission.
    pub ltv: LtvWindow,
    /// Riccati recursion over the whole mission; supplies `K_t` and `Θ_t`.
    pub tape: RiccatiTape,
    pub vhat_inv: Vec<f64>,
    pub w: SpdMatrix,
    pub p_init: SpdMatrix,
}

impl Scenario {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let config = cfg.resolved();
        let r = &config.reference;
        let start = RobotState::new(r.start[0], r.start[1], r.start[2]);
        let reference = reference_circle(r.radius, start, r.steps, r.dt, r.arc_fraction)?;
        let landmarks: Vec<Landmark> = config
            .landmarks
            .resolved_positions()
            .into_iter()
            .enumerate()
            .map(|(id, position)| Landmark { id, position })
            .collect();
        let w = SpdMatrix::from_diagonal(&config.noise.w_diag).map_err(|e| Error::Config(e.to_string()))?;
        let ltv = linearize(&reference, &landmarks, (0, r.steps - 1), &w)?;
        let weights = CostWeights {
            q: SpdMatrix::from_diagonal(&config.weights.q_diag).map_err(|e| Error::Config(e.to_string()))?,
            r: SpdMatrix::from_diagonal(&config.weights.r_diag).map_err(|e| Error::Config(e.to_string()))?,
        };
        let tape = backward_riccati(&ltv, &weights)?;
        let p_init = SpdMatrix::from_diagonal(&config.p_init_diag).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Scenario { vhat_inv: config.resolved_vhat_inv(), config, reference, landmarks, ltv, tape, w, p_init })
    }

    pub fn steps(&self) -> usize {
        self.reference.len()
    }

    /// `Q_{1|0} = P_{1|0}⁻¹`.
    pub fn initial_information(&self) -> SpdMatrix {
        self.p_init.inverse()
    }

    /// Window `[t, min(t + H, T − 1)]`, truncated at the end of the mission.
    pub fn window_bounds(&self, t: usize, horizon: usize) -> (usize, usize) {
        (t, (t + horizon).min(self.steps() - 1))
    }

    /// Allocation problem for the window starting at `t`.
    pub fn window_problem(&self, t: usize, horizon: usize, q_init: SpdMatrix, beta: f64) -> Result<WindowProblem> {
        let (from, to) = self.window_bounds(t, horizon);
        let ltv = self.ltv.slice(from, to);
        let theta = (from..=to).map(|k| self.tape.theta_at(k).clone()).collect();
        WindowProblem::from_ltv(&ltv, theta, q_init, self.vhat_inv.clone(), beta)
    }
}
