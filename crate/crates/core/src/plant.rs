//! Unicycle robot, bearing-only landmark sensor, circular reference and the
//! LTV linearization about that reference.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symkernel::SpdMatrix;

pub const STATE_DIM: usize = 3;
pub const INPUT_DIM: usize = 2;

/// Landmarks closer than this to the robot make the bearing undefined.
pub const COLLISION_DISTANCE: f64 = 1e-6;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta - 2.0 * PI * ((theta - PI) / (2.0 * PI)).ceil();
    // ceil can land one period off for values within an ulp of an odd multiple of π
    if w <= -PI {
        w + 2.0 * PI
    } else if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        RobotState { x, y, theta: wrap_angle(theta) }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&[self.x, self.y, self.theta])
    }

    /// Deviation `self − reference` with the heading difference wrapped.
    pub fn deviation_from(&self, reference: &RobotState) -> DVector<f64> {
        DVector::from_column_slice(&[
            self.x - reference.x,
            self.y - reference.y,
            wrap_angle(self.theta - reference.theta),
        ])
    }

    /// `reference + deviation`, heading wrapped.
    pub fn offset(&self, deviation: &DVector<f64>) -> RobotState {
        RobotState::new(self.x + deviation[0], self.y + deviation[1], self.theta + deviation[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&[self.v, self.omega])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: usize,
    pub position: [f64; 2],
}

/// Noiseless-or-perturbed Euler step of the unicycle.
pub fn step_dynamics(s: &RobotState, u: &ControlInput, dt: f64, noise: [f64; 3]) -> RobotState {
    debug_assert!(dt > 0.0);
    RobotState {
        x: s.x + u.v * s.theta.cos() * dt + noise[0],
        y: s.y + u.v * s.theta.sin() * dt + noise[1],
        theta: wrap_angle(s.theta + u.omega * dt + noise[2]),
    }
}

fn landmark_offset(s: &RobotState, lm: &Landmark) -> Result<(f64, f64)> {
    let dx = lm.position[0] - s.x;
    let dy = lm.position[1] - s.y;
    if dx.hypot(dy) <= COLLISION_DISTANCE {
        return Err(Error::LandmarkCollision { id: lm.id });
    }
    Ok((dx, dy))
}

/// Bearings to every landmark relative to the robot heading, wrapped to `(-π, π]`.
pub fn measure(s: &RobotState, landmarks: &[Landmark], noise: &[f64]) -> Result<DVector<f64>> {
    if noise.len() != landmarks.len() {
        return Err(Error::DimensionMismatch { expected: landmarks.len(), found: noise.len() });
    }
    let mut y = DVector::zeros(landmarks.len());
    for (i, lm) in landmarks.iter().enumerate() {
        let (dx, dy) = landmark_offset(s, lm)?;
        y[i] = wrap_angle(dy.atan2(dx) - s.theta + noise[i]);
    }
    Ok(y)
}

/// A reference that the noiseless dynamics reproduce exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub states: Vec<RobotState>,
    pub inputs: Vec<ControlInput>,
    pub dt: f64,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Input applied at step `k`. The last state has no successor, so it reuses
    /// the final input (the linearization at the last step needs one).
    pub fn input_at(&self, k: usize) -> ControlInput {
        self.inputs[k.min(self.inputs.len() - 1)]
    }

    /// Largest per-component mismatch between `states[t+1]` and the noiseless
    /// step from `states[t]`.
    pub fn feasibility_residual(&self) -> f64 {
        self.states
            .windows(2)
            .zip(&self.inputs)
            .map(|(pair, u)| {
                let next = step_dynamics(&pair[0], u, self.dt, [0.0; 3]);
                let d = next.deviation_from(&pair[1]);
                d.amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Anticlockwise arc with constant speed and turn rate, built by stepping the
/// noiseless dynamics so that the reference is feasible by construction.
pub fn reference_circle(
    radius: f64,
    start: RobotState,
    steps: usize,
    dt: f64,
    arc_fraction: f64,
) -> Result<ReferenceTrajectory> {
    if !(radius > 0.0) || steps < 2 || !(dt > 0.0) {
        return Err(Error::Config(format!(
            "reference circle needs radius > 0, steps >= 2, dt > 0 (got {radius}, {steps}, {dt})"
        )));
    }
    let v = arc_fraction * 2.0 * PI * radius / ((steps - 1) as f64 * dt);
    let input = ControlInput { v, omega: v / radius };
    let mut states = Vec::with_capacity(steps);
    states.push(RobotState::new(start.x, start.y, start.theta));
    for t in 1..steps {
        let next = step_dynamics(&states[t - 1], &input, dt, [0.0; 3]);
        states.push(next);
    }
    Ok(ReferenceTrajectory { states, inputs: vec![input; steps - 1], dt })
}

/// Linearized dynamics and measurement model over steps `start..=end` of a reference.
#[derive(Clone, Debug)]
pub struct LtvWindow {
    pub start: usize,
    /// `A_k`, `n × n`
    pub a: Vec<DMatrix<f64>>,
    /// `B_k`, `n × 2`
    pub b: Vec<DMatrix<f64>>,
    /// `C_k`, `M × n`; row `i` belongs to landmark `i`
    pub c: Vec<DMatrix<f64>>,
    pub w: SpdMatrix,
}

impl LtvWindow {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn end(&self) -> usize {
        self.start + self.len() - 1
    }

    pub fn landmark_count(&self) -> usize {
        self.c.first().map_or(0, |c| c.nrows())
    }

    /// Sub-window over absolute steps `from..=to`.
    pub fn slice(&self, from: usize, to: usize) -> LtvWindow {
        let lo = from - self.start;
        let hi = to - self.start + 1;
        LtvWindow {
            start: from,
            a: self.a[lo..hi].to_vec(),
            b: self.b[lo..hi].to_vec(),
            c: self.c[lo..hi].to_vec(),
            w: self.w.clone(),
        }
    }
}

pub fn dynamics_jacobians(s: &RobotState, u: &ControlInput, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (sin, cos) = s.theta.sin_cos();
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[1.0, 0.0, -u.v * sin * dt, 0.0, 1.0, u.v * cos * dt, 0.0, 0.0, 1.0],
    );
    let b = DMatrix::from_row_slice(3, 2, &[cos * dt, 0.0, sin * dt, 0.0, 0.0, dt]);
    (a, b)
}

pub fn measurement_jacobian(s: &RobotState, landmarks: &[Landmark]) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(landmarks.len(), STATE_DIM);
    for (i, lm) in landmarks.iter().enumerate() {
        let (dx, dy) = landmark_offset(s, lm)?;
        let d2 = dx * dx + dy * dy;
        c[(i, 0)] = dy / d2;
        c[(i, 1)] = -dx / d2;
        c[(i, 2)] = -1.0;
    }
    Ok(c)
}

/// Linearizes about the reference over `window = (start, end)`, inclusive.
pub fn linearize(
    reference: &ReferenceTrajectory,
    landmarks: &[Landmark],
    window: (usize, usize),
    w: &SpdMatrix,
) -> Result<LtvWindow> {
    let (start, end) = window;
    if start > end || end >= reference.len() {
        return Err(Error::Config(format!(
            "window [{start}, {end}] outside reference of length {}",
            reference.len()
        )));
    }
    let mut out = LtvWindow {
        start,
        a: Vec::with_capacity(end - start + 1),
        b: Vec::with_capacity(end - start + 1),
        c: Vec::with_capacity(end - start + 1),
        w: w.clone(),
    };
    for k in start..=end {
        let s = &reference.states[k];
        let (a, b) = dynamics_jacobians(s, &reference.input_at(k), reference.dt);
        out.a.push(a);
        out.b.push(b);
        out.c.push(measurement_jacobian(s, landmarks)?);
    }
    Ok(out)
}
