//! Log-barrier path following with damped Newton centering.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolverStatus,
    pub newton_iterations: usize,
    /// Duality-gap bound `m / t` of the final centering, relative to `max(1, |f|)`.
    pub kkt_residual: f64,
    /// Number of centering stages along the barrier path.
    pub barrier_stages: usize,
    /// Path parameter `t` of the final centering.
    pub path_parameter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierSettings {
    /// Target relative duality gap.
    pub tol: f64,
    /// Path parameter growth per centering stage.
    pub mu: f64,
    pub max_newton: usize,
    pub armijo: f64,
    pub shrink: f64,
    /// Fraction of the distance to the cone boundary a step may cover.
    pub boundary_fraction: f64,
    /// Centering stops once half the squared Newton decrement falls below this.
    pub newton_tol: f64,
    /// Abandon the solve after this much wall time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        BarrierSettings {
            tol: 1e-7,
            mu: 10.0,
            max_newton: 2000,
            armijo: 1e-4,
            shrink: 0.5,
            boundary_fraction: 0.99,
            newton_tol: 1e-10,
            time_limit_s: None,
        }
    }
}

pub(crate) struct Derivatives {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// A smooth convex objective `f0` with a self-concordant barrier `φ` for its domain.
pub(crate) trait BarrierProblem {
    fn dim(&self) -> usize;

    /// Barrier degree `m`: the duality gap at the `t`-central point is `m / t`.
    fn degree(&self) -> f64;

    /// `(f0, φ)`, or `None` outside the open domain.
    fn values(&self, x: &DVector<f64>) -> Option<(f64, f64)>;

    /// Gradient and Hessian of `wf·f0 + wb·φ`.
    fn derivatives(&self, x: &DVector<f64>, wf: f64, wb: f64) -> Option<Derivatives>;

    /// Largest `α` keeping `x + α·dx` in the closed domain.
    fn max_step(&self, x: &DVector<f64>, dx: &DVector<f64>) -> f64;
}

pub(crate) struct BarrierOutcome {
    pub x: DVector<f64>,
    pub f0: f64,
    pub report: SolverReport,
    /// Centered iterate after each stage, with its path parameter.
    pub centers: Vec<(f64, DVector<f64>)>,
}

fn newton_direction(d: &Derivatives) -> Option<DVector<f64>> {
    let n = d.grad.len();
    let scale = d.hess.diagonal().amax().max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        let h = if shift > 0.0 { &d.hess + DMatrix::identity(n, n) * shift } else { d.hess.clone() };
        if let Some(x) = dense_cholesky_solve(&h, &d.grad) {
            return Some(-x);
        }
        shift = if shift == 0.0 { 1e-12 * scale } else { shift * 100.0 };
    }
    None
}

/// Solves `H x = g` for symmetric positive definite `H` by a full dense
/// Cholesky factorization (no sparsity is exploited). Right-looking and
/// blocked so the trailing updates run as matrix products. Returns `None`
/// when a pivot is not positive.
fn dense_cholesky_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    const BLOCK: usize = 48;
    let n = h.nrows();
    let mut a = h.clone();
    let mut j = 0;
    while j < n {
        let b = BLOCK.min(n - j);
        let l11 = a.view((j, j), (b, b)).clone_owned().cholesky()?.unpack();
        a.view_mut((j, j), (b, b)).copy_from(&l11);
        let rest = n - j - b;
        if rest > 0 {
            // L21 = A21 L11⁻ᵀ
            let inv_t = l11.solve_lower_triangular(&DMatrix::identity(b, b))?.transpose();
            let l21 = a.view((j + b, j), (rest, b)) * inv_t;
            let l21t = l21.transpose();
            a.view_mut((j + b, j + b), (rest, rest)).gemm(-1.0, &l21, &l21t, 1.0);
            a.view_mut((j + b, j), (rest, b)).copy_from(&l21);
        }
        j += b;
    }
    let l = a.lower_triangle();
    let y = l.solve_lower_triangular(g)?;
    l.tr_solve_lower_triangular(&y)
}

/// Half the squared Newton decrement of the centering problem at `x`, or
/// `None` outside the domain.
pub(crate) fn centering_decrement<P: BarrierProblem>(p: &P, x: &DVector<f64>, t: f64) -> Option<f64> {
    let d = p.derivatives(x, t, 1.0)?;
    let dx = newton_direction(&d)?;
    Some(-d.grad.dot(&dx) / 2.0)
}

/// Initial path parameter balancing the objective and barrier gradients.
fn initial_t<P: BarrierProblem>(p: &P, x: &DVector<f64>, f0: f64) -> f64 {
    let fallback = p.degree() / f0.abs().max(1.0);
    let (Some(g0), Some(gb)) = (p.derivatives(x, 1.0, 0.0), p.derivatives(x, 0.0, 1.0)) else {
        return fallback;
    };
    let gg = g0.grad.dot(&g0.grad);
    if gg <= 0.0 {
        return fallback;
    }
    let t = -g0.grad.dot(&gb.grad) / gg;
    if t.is_finite() && t > 0.0 {
        t.clamp(1e-3 * fallback, 1e3 * fallback)
    } else {
        fallback
    }
}

pub(crate) fn minimize<P: BarrierProblem>(
    p: &P,
    x0: DVector<f64>,
    settings: &BarrierSettings,
    abs_gap: Option<f64>,
    t_start: Option<f64>,
) -> Result<BarrierOutcome> {
    let Some((mut f0, _)) = p.values(&x0) else {
        return Err(Error::Infeasible("starting point outside the barrier domain".into()));
    };
    let mut x = x0;
    let m = p.degree();
    let mut t = match t_start {
        Some(t) if t.is_finite() && t > 0.0 => t,
        _ => initial_t(p, &x, f0),
    };
    let mut newton = 0usize;
    let mut stages = 0usize;
    let mut centers = Vec::new();
    let started = std::time::Instant::now();
    loop {
        stages += 1;
        // centering
        loop {
            let Some(d) = p.derivatives(&x, t, 1.0) else {
                return Err(Error::Infeasible("iterate left the barrier domain".into()));
            };
            let Some(dx) = newton_direction(&d) else { break };
            let slope = d.grad.dot(&dx);
            if -slope / 2.0 <= settings.newton_tol || !slope.is_finite() {
                break;
            }
            newton += 1;
            if newton > settings.max_newton {
                return Err(Error::MaxIterations { iterations: newton - 1 });
            }
            if let Some(limit) = settings.time_limit_s {
                if started.elapsed().as_secs_f64() > limit {
                    return Err(Error::TimeLimit { seconds: limit });
                }
            }
            let (fc, phic) = p.values(&x).expect("current iterate is interior");
            let merit = t * fc + phic;
            let mut alpha = (settings.boundary_fraction * p.max_step(&x, &dx)).min(1.0);
            let mut accepted = None;
            for _ in 0..60 {
                let trial = &x + &dx * alpha;
                if let Some((ft, pt)) = p.values(&trial) {
                    let mt = t * ft + pt;
                    // the strict check guards against steps lost in rounding
                    if mt <= merit + settings.armijo * alpha * slope && mt < merit {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
                alpha *= settings.shrink;
            }
            match accepted {
                Some((trial, ft)) => {
                    x = trial;
                    f0 = ft;
                }
                // no decrease representable in floating point: as centered as it gets
                None => break,
            }
        }
        centers.push((t, x.clone()));
        let gap = m / t;
        let rel = gap / f0.abs().max(1.0);
        let done = match abs_gap {
            Some(g) => gap <= g,
            None => rel <= settings.tol,
        };
        if done {
            return Ok(BarrierOutcome {
                x,
                f0,
                report: SolverReport {
                    status: SolverStatus::Converged,
                    newton_iterations: newton,
                    kkt_residual: rel,
                    barrier_stages: stages,
                    path_parameter: t,
                },
                centers,
            });
        }
        t *= settings.mu;
    }
}

/// Largest `α` with `X + α·Δ ⪰ 0`, given the lower Cholesky factor of `X`.
pub(crate) fn cone_step(chol: &DMatrix<f64>, delta: &DMatrix<f64>) -> f64 {
    let Some(y) = chol.solve_lower_triangular(delta) else { return 0.0 };
    let Some(mt) = chol.solve_lower_triangular(&y.transpose()) else { return 0.0 };
    let m = (&mt + mt.transpose()) * 0.5;
    let lmin = crate::symkernel::min_eigenvalue_dense(&m);
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}
