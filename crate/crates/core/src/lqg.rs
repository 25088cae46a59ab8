//! Backward Riccati recursion for the finite-horizon LQG controller.
//!
//! Step indices are zero-based: mission step `t` applies the control computed
//! from `s[t + 1]`, the cost-to-go weight on the state reached after that
//! step. `s[T] = Q` is the terminal weight and `s[0]` is the weight that
//! multiplies the initial covariance in the constant cost term.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::plant::LtvWindow;
use crate::symkernel::{cholesky_dense, SpdMatrix, SymMatrix};

#[derive(Clone, Debug)]
pub struct CostWeights {
    pub q: SpdMatrix,
    pub r: SpdMatrix,
}

#[derive(Clone, Debug)]
pub struct RiccatiTape {
    /// `T + 1` cost-to-go weights.
    pub s: Vec<SymMatrix>,
    /// Feedback gain per step, `m × n`.
    pub k: Vec<DMatrix<f64>>,
    /// `Θ_t = K_tᵀ (BᵀSB + R) K_t`, the weight of the filtered covariance.
    pub theta: Vec<SymMatrix>,
    pub q: SymMatrix,
}

impl RiccatiTape {
    pub fn steps(&self) -> usize {
        self.k.len()
    }

    /// `Θ` for step `t`, clamped to the last step for windows that run past the mission.
    pub fn theta_at(&self, t: usize) -> &SymMatrix {
        &self.theta[t.min(self.theta.len() - 1)]
    }
}

/// Runs the dynamic Riccati equation backward over every step of `ltv`.
pub fn backward_riccati(ltv: &LtvWindow, weights: &CostWeights) -> Result<RiccatiTape> {
    let steps = ltv.len();
    if steps == 0 {
        return Err(Error::Config("Riccati recursion needs at least one step".into()));
    }
    let q = weights.q.to_dense();
    let r = weights.r.to_dense();
    let mut s = vec![SymMatrix::zeros(q.nrows()); steps + 1];
    let mut k = vec![DMatrix::zeros(r.nrows(), q.nrows()); steps];
    let mut theta = vec![SymMatrix::zeros(q.nrows()); steps];
    s[steps] = weights.q.as_sym().clone();
    for t in (0..steps).rev() {
        let st = s[t + 1].to_dense();
        let (a, b) = (&ltv.a[t], &ltv.b[t]);
        let bts = b.transpose() * &st;
        let inner = &bts * b + &r;
        let chol = cholesky_dense(&inner, 0.0).map_err(|_| Error::SingularInnerMatrix { step: t })?;
        let rhs = &bts * a;
        let y = chol.solve_lower_triangular(&rhs).expect("positive pivots");
        let gain = -chol.tr_solve_lower_triangular(&y).expect("positive pivots");
        let th = gain.transpose() * &inner * &gain;
        let next = a.transpose() * &st * a - &th + &q;
        k[t] = gain;
        theta[t] = SymMatrix::from_dense(&th);
        s[t] = SymMatrix::from_dense(&next);
    }
    Ok(RiccatiTape { s, k, theta, q: weights.q.as_sym().clone() })
}

/// Certainty-equivalent feedback `u = K·x̂` in deviation coordinates.
pub fn control(gain: &DMatrix<f64>, xhat: &DVector<f64>) -> DVector<f64> {
    gain * xhat
}

/// Expected LQG cost split into the allocation-dependent part
/// `Σ Tr(Θ_t Q_{t|t}⁻¹)` and the constant `Σ Tr(S_t W) + Tr((S_0 − Q) P_init)`.
pub fn expected_cost(
    tape: &RiccatiTape,
    q_filtered: &[SpdMatrix],
    w: &SpdMatrix,
    p_init: &SpdMatrix,
) -> (f64, f64) {
    let variable = q_filtered
        .iter()
        .enumerate()
        .map(|(t, qf)| tape.theta_at(t).to_dense().component_mul(&qf.inverse_dense()).sum())
        .sum();
    let w_sym = w.as_sym();
    let constant = tape.s[1..].iter().map(|s| s.inner(w_sym)).sum::<f64>()
        + tape.s[0].sub(&tape.q).inner(p_init.as_sym());
    (variable, constant)
}
