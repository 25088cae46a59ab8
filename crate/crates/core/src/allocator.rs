//! Receding-horizon attention allocation with a directed-information penalty.
//!
//! For a window of `H + 1` steps the allocator minimizes
//!
//! ```text
//! Σ_k Tr(Θ_k Q_filt_k⁻¹) + β/2 · (log det Q_filt_k − log det Q_pred_k)
//! ```
//!
//! over diagonal attention `0 ≤ u_k ≤ V̂⁻¹` with `Q_filt_k = Q_pred_k + C_kᵀ diag(u_k) C_k`,
//! `Q_pred_0` fixed and the Riccati prediction relaxed to an LMI. The concave
//! `log det Q_filt` is handled by the convex-concave procedure: each iteration
//! replaces it with its tangent at the current iterate and solves the
//! resulting convex problem, centrally or by ADMM.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmConfig, AdmmState};
use crate::error::{Error, Result};
use crate::filter::{information_gain, AttentionVector};
use crate::plant::LtvWindow;
use crate::subsolver::{self, BarrierSettings, ConvexSubproblem, Coupling, PrimalPoint, StepBlock};
use crate::symkernel::{SpdMatrix, SymMatrix};

/// One receding-horizon allocation problem.
#[derive(Clone, Debug)]
pub struct WindowProblem {
    /// `Θ_k` for the `H + 1` window steps.
    pub theta: Vec<SymMatrix>,
    /// `C_k`, `M × n` per step.
    pub c: Vec<DMatrix<f64>>,
    /// `A_k` maps step `k` to `k + 1`; `H` entries.
    pub a: Vec<DMatrix<f64>>,
    pub w: SpdMatrix,
    /// Predicted information `Q_{t|t-1}` at the first window step.
    pub q_init: SpdMatrix,
    pub vhat_inv: Vec<f64>,
    pub beta: f64,
}

impl WindowProblem {
    /// Window data from a linearization; `theta` must cover the same steps.
    pub fn from_ltv(
        ltv: &LtvWindow,
        theta: Vec<SymMatrix>,
        q_init: SpdMatrix,
        vhat_inv: Vec<f64>,
        beta: f64,
    ) -> Result<Self> {
        if ltv.is_empty() {
            return Err(Error::Config("empty allocation window".into()));
        }
        let p = WindowProblem {
            theta,
            c: ltv.c.clone(),
            a: ltv.a[..ltv.len() - 1].to_vec(),
            w: ltv.w.clone(),
            q_init,
            vhat_inv,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn horizon(&self) -> usize {
        self.theta.len().saturating_sub(1)
    }

    pub fn state_dim(&self) -> usize {
        self.q_init.dim()
    }

    pub fn landmark_count(&self) -> usize {
        self.vhat_inv.len()
    }

    pub fn validate(&self) -> Result<()> {
        let steps = self.theta.len();
        let n = self.state_dim();
        if steps == 0 {
            return Err(Error::Config("allocation window without steps".into()));
        }
        if self.c.len() != steps || self.a.len() + 1 != steps {
            return Err(Error::DimensionMismatch { expected: steps, found: self.c.len() });
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and nonnegative, got {}", self.beta)));
        }
        if self.vhat_inv.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("attention caps must be positive and finite".into()));
        }
        for (th, c) in self.theta.iter().zip(&self.c) {
            if th.dim() != n || c.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: c.ncols() });
            }
            if c.nrows() != self.vhat_inv.len() {
                return Err(Error::DimensionMismatch { expected: self.vhat_inv.len(), found: c.nrows() });
            }
        }
        if self.a.iter().any(|a| a.nrows() != n || a.ncols() != n) || self.w.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.w.dim() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsolverMethod {
    /// One barrier solve over the whole window.
    #[default]
    Centralized,
    /// Per-step decomposition with ADMM.
    Admm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcpConfig {
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub method: SubsolverMethod,
    pub barrier: BarrierSettings,
    pub admm: AdmmConfig,
    /// Attention within this fraction of a box face is set onto the face.
    pub snap: f64,
}

impl Default for CcpConfig {
    fn default() -> Self {
        CcpConfig {
            tol: 1e-6,
            max_iter: 50,
            method: SubsolverMethod::Centralized,
            barrier: BarrierSettings::default(),
            admm: AdmmConfig::default(),
            snap: 1e-6,
        }
    }
}

/// Information chain over a window.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub q_pred: Vec<SpdMatrix>,
    pub q_filt: Vec<SpdMatrix>,
    pub u: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct AllocationSolution {
    pub u_star: Vec<AttentionVector>,
    /// Equality-consistent chain reconstructed from `u_star`.
    pub q_pred: Vec<SpdMatrix>,
    pub q_filt: Vec<SpdMatrix>,
    /// Window objective on the reconstructed chain.
    pub objective: f64,
    /// Window objective on the last relaxed iterate.
    pub relaxed_objective: f64,
    pub di_bits: f64,
    pub trace_cost: f64,
    /// Number of convex subproblems solved.
    pub ccp_iterations: usize,
    /// Window objective of each accepted iterate, starting at the initial chain.
    pub history: Vec<f64>,
    pub newton_iterations: usize,
    pub admm_iterations: usize,
    /// Last relaxed iterate.
    pub relaxed: Chain,
}

/// `Σ ½(log det Q_filt − log det Q_pred)`, in bits.
pub fn directed_info(q_filt: &[SpdMatrix], q_pred: &[SpdMatrix]) -> f64 {
    directed_info_terms(q_filt, q_pred).iter().sum()
}

/// Per-step directed-information increments in bits.
pub fn directed_info_terms(q_filt: &[SpdMatrix], q_pred: &[SpdMatrix]) -> Vec<f64> {
    assert_eq!(q_filt.len(), q_pred.len(), "misaligned information sequences");
    q_filt
        .iter()
        .zip(q_pred)
        .map(|(f, p)| 0.5 * (f.logdet() - p.logdet()) / std::f64::consts::LN_2)
        .collect()
}

/// `log det Q_j + Tr(Q_j⁻¹ Q) − n`, the tangent of `log det` at `Q_j`.
pub fn logdet_tangent(q: &SymMatrix, q_j: &SpdMatrix) -> f64 {
    q_j.logdet() + q_j.inverse().as_sym().inner(q) - q.dim() as f64
}

/// `(A Q⁻¹ Aᵀ + W)⁻¹`.
pub fn predict_information(q_filt: &SpdMatrix, a: &DMatrix<f64>, w: &SpdMatrix) -> Result<SpdMatrix> {
    let cov = q_filt.inverse().as_sym().congruence(a).add(w.as_sym());
    Ok(SpdMatrix::new(cov)?.inverse())
}

/// Window objective on a chain.
pub fn window_objective(p: &WindowProblem, q_pred: &[SpdMatrix], q_filt: &[SpdMatrix]) -> f64 {
    trace_cost(p, q_filt)
        + 0.5 * p.beta * q_filt.iter().zip(q_pred).map(|(f, pr)| f.logdet() - pr.logdet()).sum::<f64>()
}

/// `Σ Tr(Θ_k Q_filt_k⁻¹)`.
pub fn trace_cost(p: &WindowProblem, q_filt: &[SpdMatrix]) -> f64 {
    p.theta.iter().zip(q_filt).map(|(th, f)| th.inner(f.inverse().as_sym())).sum()
}

/// Zero-attention chain propagated by the equality Riccati recursion.
pub fn feasible_init(p: &WindowProblem) -> Result<Chain> {
    let zeros = vec![vec![0.0; p.landmark_count()]; p.theta.len()];
    let (q_pred, q_filt) = reconstruct_consistent(&zeros, p)?;
    Ok(Chain { q_pred, q_filt, u: zeros })
}

/// Chain obtained by running the information filter with attention `u`
/// from `Q_init`: the consistent chain associated with a relaxed solution.
pub fn reconstruct_consistent(u: &[Vec<f64>], p: &WindowProblem) -> Result<(Vec<SpdMatrix>, Vec<SpdMatrix>)> {
    if u.len() != p.theta.len() {
        return Err(Error::DimensionMismatch { expected: p.theta.len(), found: u.len() });
    }
    let mut q_pred = Vec::with_capacity(u.len());
    let mut q_filt: Vec<SpdMatrix> = Vec::with_capacity(u.len());
    for (k, uk) in u.iter().enumerate() {
        let pred = if k == 0 {
            p.q_init.clone()
        } else {
            predict_information(&q_filt[k - 1], &p.a[k - 1], &p.w)?
        };
        let filt = SpdMatrix::new(pred.as_sym().add(&information_gain(&p.c[k], uk)))?;
        q_pred.push(pred);
        q_filt.push(filt);
    }
    Ok((q_pred, q_filt))
}

/// Uniform rescaling `Q → σQ` that brings `Q_init` to unit average eigenvalue.
/// The window objective is invariant under it.
struct Scaling {
    sigma: f64,
}

impl Scaling {
    fn new(p: &WindowProblem) -> Self {
        Scaling { sigma: p.state_dim() as f64 / p.q_init.as_sym().trace() }
    }

    /// Convex subproblem linearized at `lin` (unscaled filtered information).
    fn subproblem(&self, p: &WindowProblem, lin: &[SpdMatrix]) -> ConvexSubproblem {
        let s = self.sigma;
        let root = s.sqrt();
        let steps = p
            .theta
            .iter()
            .zip(&p.c)
            .zip(lin)
            .map(|((th, c), qj)| StepBlock {
                theta: th.scale(s),
                linear: qj.inverse().as_sym().scale(0.5 * p.beta / s),
                logdet_weight: 0.5 * p.beta,
                c: c * root,
                caps: p.vhat_inv.clone(),
                prox: None,
            })
            .collect();
        let w = SpdMatrix::new(p.w.as_sym().scale(1.0 / s)).expect("scaled noise stays SPD");
        ConvexSubproblem {
            state_dim: p.state_dim(),
            steps,
            couplings: p.a.iter().map(|a| Coupling { a: a.clone(), w: w.clone() }).collect(),
            boundary: Some(p.q_init.as_sym().scale(s)),
        }
    }

    fn relaxed_chain(&self, p: &WindowProblem, point: &PrimalPoint) -> Result<Chain> {
        let inv = 1.0 / self.sigma;
        let mut q_pred = Vec::with_capacity(point.q_pred.len());
        let mut q_filt = Vec::with_capacity(point.q_pred.len());
        for (k, (qp, uk)) in point.q_pred.iter().zip(&point.u).enumerate() {
            let pred = if k == 0 { p.q_init.clone() } else { SpdMatrix::new(qp.scale(inv))? };
            q_filt.push(SpdMatrix::new(pred.as_sym().add(&information_gain(&p.c[k], uk)))?);
            q_pred.push(pred);
        }
        Ok(Chain { q_pred, q_filt, u: point.u.clone() })
    }
}

/// Convex subproblem of one CCP iteration, linearized at the filtered
/// information `lin` and expressed in the solver's rescaled coordinates.
/// Objective values are unaffected by the rescaling.
pub fn linearized_subproblem(p: &WindowProblem, lin: &[SpdMatrix]) -> Result<ConvexSubproblem> {
    p.validate()?;
    if lin.len() != p.theta.len() {
        return Err(Error::DimensionMismatch { expected: p.theta.len(), found: lin.len() });
    }
    Ok(Scaling::new(p).subproblem(p, lin))
}

fn snap(u: &[Vec<f64>], caps: &[f64], frac: f64) -> Vec<Vec<f64>> {
    u.iter()
        .map(|uk| {
            uk.iter()
                .zip(caps)
                .map(|(&v, &c)| {
                    if v <= frac * c {
                        0.0
                    } else if v >= (1.0 - frac) * c {
                        c
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

/// Convex-concave procedure on a window problem.
///
/// Starts from the zero-attention chain. An iterate whose window objective is
/// not below its predecessor is discarded and the loop ends, so the accepted
/// objective sequence is non-increasing. The final attention is snapped onto
/// the box faces within `cfg.snap` and the consistent chain is rebuilt from it.
pub fn ccp_solve(p: &WindowProblem, cfg: &CcpConfig) -> Result<AllocationSolution> {
    p.validate()?;
    let scaling = Scaling::new(p);
    let mut chain = feasible_init(p)?;
    let mut f = window_objective(p, &chain.q_pred, &chain.q_filt);
    let mut history = vec![f];
    let mut solves = 0;
    let mut newton = 0;
    let mut admm_iters = 0;
    let mut admm_state: Option<AdmmState> = None;
    // consecutive subproblems differ only in their linear term, so each one
    // re-enters the central path of the previous solve
    let mut warm: Vec<(f64, subsolver::PrimalPoint)> = Vec::new();
    let has_attention = p.landmark_count() > 0;

    for iteration in 1..=cfg.max_iter {
        if !has_attention {
            break;
        }
        let sub = scaling.subproblem(p, &chain.q_filt);
        solves += 1;
        let wrap = |e: Error| Error::SubsolverFailure { iteration, source: Box::new(e) };
        let next = match cfg.method {
            SubsolverMethod::Centralized => {
                let sol = subsolver::solve_warm(&sub, &cfg.barrier, &warm).map_err(wrap)?;
                newton += sol.report.newton_iterations;
                warm = sol.path.clone();
                scaling.relaxed_chain(p, &sol.point)?
            }
            SubsolverMethod::Admm => {
                let out = admm::run(&sub, &cfg.admm, admm_state.take()).map_err(wrap)?;
                admm_iters += out.state.iteration;
                // ADMM iterates satisfy the LMI only approximately; the
                // consistent chain of their attention is exactly feasible
                let u: Vec<Vec<f64>> = out
                    .state
                    .u
                    .iter()
                    .map(|uk| uk.iter().zip(&p.vhat_inv).map(|(v, c)| v.clamp(0.0, *c)).collect())
                    .collect();
                admm_state = Some(out.state);
                let (q_pred, q_filt) = reconstruct_consistent(&u, p)?;
                Chain { q_pred, q_filt, u }
            }
        };
        let f_next = window_objective(p, &next.q_pred, &next.q_filt);
        if !(f_next <= f) {
            break;
        }
        let decrease = (f - f_next) / f.abs().max(f64::MIN_POSITIVE);
        chain = next;
        f = f_next;
        history.push(f);
        if decrease < cfg.tol {
            break;
        }
    }

    let u = snap(&chain.u, &p.vhat_inv, cfg.snap);
    let (q_pred, q_filt) = reconstruct_consistent(&u, p)?;
    let objective = window_objective(p, &q_pred, &q_filt);
    Ok(AllocationSolution {
        u_star: u.into_iter().map(|uk| AttentionVector::new(uk, p.vhat_inv.clone())).collect::<Result<_>>()?,
        di_bits: directed_info(&q_filt, &q_pred),
        trace_cost: trace_cost(p, &q_filt),
        q_pred,
        q_filt,
        objective,
        relaxed_objective: f,
        ccp_iterations: solves,
        history,
        newton_iterations: newton,
        admm_iterations: admm_iters,
        relaxed: chain,
    })
}
