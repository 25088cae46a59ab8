//! Barrier/Newton interior-point solver for the convexified allocation
//! subproblems.
//!
//! Each step `k` of a window owns the predicted information `Q_pred_k` (an
//! svec block, unless it is the fixed boundary) and the attention vector
//! `u_k`. The filtered information is eliminated through
//! `Q_filt_k = Q_pred_k + C_kᵀ diag(u_k) C_k`, so that equality holds exactly.
//! Consecutive steps may be tied by the relaxed Riccati LMI
//!
//! ```text
//! [ Qp      Qp·A   Qp·W½ ]
//! [ Aᵀ·Qp   Qf⁻    0     ]  ⪰ 0      (Qp = Q_pred_k, Qf⁻ = Q_filt_{k-1})
//! [ W½·Qp   0      I     ]
//! ```
//!
//! which is equivalent to `Q_pred_k⁻¹ ⪰ A·Q_filt_{k-1}⁻¹·Aᵀ + W`.
//!
//! The per-step objective is
//! `Tr(Θ Q_filt⁻¹) + Tr(L Q_filt) − w·log det Q_pred + ρ/2·(‖Q_pred − T_pred‖² + ‖Q_filt − T_filt‖²)`.

mod barrier;
mod zstep;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

pub use barrier::{BarrierSettings, SolverReport, SolverStatus};
use barrier::{cone_step, BarrierProblem, Derivatives};
pub use zstep::{project_pair, solve_zstep, ZStepSettings};
use zstep::lmi_block;

use crate::error::{Error, Result};
use crate::symkernel::{cholesky_dense, psd_sqrt, smat, svec, svec_basis, trace_product, SpdMatrix, SymMatrix};

/// Proximal anchor `ρ/2·(‖Q_pred − pred_target‖² + ‖Q_filt − filt_target‖²)`.
#[derive(Clone, Debug)]
pub struct Proximal {
    pub rho: f64,
    pub pred_target: SymMatrix,
    pub filt_target: SymMatrix,
}

#[derive(Clone, Debug)]
pub struct StepBlock {
    /// Weight of `Tr(Θ Q_filt⁻¹)`.
    pub theta: SymMatrix,
    /// Weight of the linear term `Tr(L Q_filt)`.
    pub linear: SymMatrix,
    /// Weight of `−log det Q_pred`.
    pub logdet_weight: f64,
    /// Measurement matrix, one row per landmark.
    pub c: DMatrix<f64>,
    /// Attention caps `V̂_i⁻¹`, all positive.
    pub caps: Vec<f64>,
    pub prox: Option<Proximal>,
}

/// Dynamics tying `Q_filt_{k-1}` to `Q_pred_k`.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub a: DMatrix<f64>,
    pub w: SpdMatrix,
}

#[derive(Clone, Debug)]
pub struct ConvexSubproblem {
    pub state_dim: usize,
    pub steps: Vec<StepBlock>,
    /// Either empty (steps are independent) or one LMI per consecutive pair.
    pub couplings: Vec<Coupling>,
    /// Fixed `Q_pred_0`; when `None` it is a free variable.
    pub boundary: Option<SymMatrix>,
}

/// Primal variables of a subproblem; `Q_filt` follows from them.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalPoint {
    pub q_pred: Vec<SymMatrix>,
    pub u: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SubproblemSolution {
    pub point: PrimalPoint,
    pub q_filt: Vec<SymMatrix>,
    pub objective: f64,
    pub report: SolverReport,
    /// Points on the central path visited by the barrier method, by
    /// increasing path parameter.
    pub path: Vec<(f64, PrimalPoint)>,
}

impl ConvexSubproblem {
    pub fn horizon(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim;
        if self.steps.is_empty() {
            return Err(Error::Config("subproblem without steps".into()));
        }
        if !self.couplings.is_empty() && self.couplings.len() + 1 != self.steps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.steps.len() - 1,
                found: self.couplings.len(),
            });
        }
        for s in &self.steps {
            if s.theta.dim() != n || s.linear.dim() != n || s.c.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: s.c.ncols() });
            }
            if s.c.nrows() != s.caps.len() {
                return Err(Error::DimensionMismatch { expected: s.c.nrows(), found: s.caps.len() });
            }
            if s.caps.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return Err(Error::Config("attention caps must be positive and finite".into()));
            }
            if !s.theta.is_finite() || !s.linear.is_finite() || !s.logdet_weight.is_finite() {
                return Err(Error::Config("non-finite subproblem weights".into()));
            }
            if let Some(p) = &s.prox {
                if !(p.rho >= 0.0) {
                    return Err(Error::Config("proximal weight must be nonnegative".into()));
                }
            }
        }
        if let Some(b) = &self.boundary {
            SpdMatrix::new(b.clone())?;
        }
        Ok(())
    }

    /// `Q_filt` for every step of a point.
    pub fn filtered(&self, point: &PrimalPoint) -> Vec<SymMatrix> {
        point
            .q_pred
            .iter()
            .zip(&point.u)
            .zip(&self.steps)
            .map(|((qp, u), s)| qp.add(&crate::filter::information_gain(&s.c, u)))
            .collect()
    }
}

struct Layout {
    n: usize,
    nsv: usize,
    offsets: Vec<usize>,
    pred_free: Vec<bool>,
    m: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(p: &ConvexSubproblem) -> Self {
        let n = p.state_dim;
        let nsv = n * (n + 1) / 2;
        let mut offsets = Vec::with_capacity(p.steps.len());
        let mut pred_free = Vec::with_capacity(p.steps.len());
        let mut m = Vec::with_capacity(p.steps.len());
        let mut total = 0;
        for (k, s) in p.steps.iter().enumerate() {
            offsets.push(total);
            let free = !(k == 0 && p.boundary.is_some());
            pred_free.push(free);
            m.push(s.caps.len());
            total += if free { nsv } else { 0 } + s.caps.len();
        }
        Layout { n, nsv, offsets, pred_free, m, total }
    }

    fn local_len(&self, k: usize) -> usize {
        self.pred_len(k) + self.m[k]
    }

    fn pred_len(&self, k: usize) -> usize {
        if self.pred_free[k] {
            self.nsv
        } else {
            0
        }
    }

    fn local(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k] + self.local_len(k)
    }

    fn pred(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k] + self.pred_len(k)
    }

    fn u(&self, k: usize) -> Range<usize> {
        let s = self.offsets[k] + self.pred_len(k);
        s..s + self.m[k]
    }
}

struct StepData {
    theta: DMatrix<f64>,
    linear: DMatrix<f64>,
    /// `c_i c_iᵀ` per landmark
    rank1: Vec<DMatrix<f64>>,
    caps: Vec<f64>,
    prox: Option<(f64, DMatrix<f64>, DMatrix<f64>)>,
    logdet_weight: f64,
    spd_barrier: bool,
}

/// Dense working copy of a subproblem, implementing the barrier interface.
struct Assembled<'a> {
    p: &'a ConvexSubproblem,
    layout: Layout,
    steps: Vec<StepData>,
    basis: Vec<DMatrix<f64>>,
    boundary: Option<DMatrix<f64>>,
    boundary_logdet: f64,
    /// `(A, W½)` per coupling
    couplings: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

struct StepEval {
    qp: DMatrix<f64>,
    qf: DMatrix<f64>,
    qp_chol: Option<DMatrix<f64>>,
    qf_chol: DMatrix<f64>,
}

fn logdet_from_chol(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

fn chol_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n)).expect("positive pivots");
    linv.transpose() * linv
}

impl<'a> Assembled<'a> {
    fn new(p: &'a ConvexSubproblem) -> Result<Self> {
        p.validate()?;
        let layout = Layout::new(p);
        let n = p.state_dim;
        let has_lmi = !p.couplings.is_empty();
        let steps = p
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| StepData {
                theta: s.theta.to_dense(),
                linear: s.linear.to_dense(),
                rank1: (0..s.c.nrows())
                    .map(|i| {
                        let r = s.c.row(i);
                        r.transpose() * r
                    })
                    .collect(),
                caps: s.caps.clone(),
                prox: s.prox.as_ref().map(|x| (x.rho, x.pred_target.to_dense(), x.filt_target.to_dense())),
                logdet_weight: s.logdet_weight,
                spd_barrier: layout.pred_free[k] && !(has_lmi && k > 0),
            })
            .collect();
        let boundary = p.boundary.as_ref().map(|b| b.to_dense());
        let boundary_logdet = p.boundary.as_ref().map_or(0.0, |b| SpdMatrix::new(b.clone()).unwrap().logdet());
        let couplings = p.couplings.iter().map(|c| (c.a.clone(), psd_sqrt(&c.w.to_dense()))).collect();
        Ok(Assembled {
            p,
            basis: (0..n * (n + 1) / 2).map(|k| svec_basis(n, k)).collect(),
            layout,
            steps,
            boundary,
            boundary_logdet,
            couplings,
        })
    }

    fn pack(&self, point: &PrimalPoint) -> DVector<f64> {
        let mut x = DVector::zeros(self.layout.total);
        for k in 0..self.steps.len() {
            if self.layout.pred_free[k] {
                x.rows_mut(self.layout.pred(k).start, self.layout.nsv).copy_from(&svec(&point.q_pred[k]));
            }
            let r = self.layout.u(k);
            x.rows_mut(r.start, r.len()).copy_from_slice(&point.u[k]);
        }
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> PrimalPoint {
        let mut q_pred = Vec::with_capacity(self.steps.len());
        let mut u = Vec::with_capacity(self.steps.len());
        for k in 0..self.steps.len() {
            q_pred.push(self.pred_sym(x, k));
            u.push(x.rows(self.layout.u(k).start, self.layout.m[k]).iter().cloned().collect());
        }
        PrimalPoint { q_pred, u }
    }

    fn pred_sym(&self, x: &DVector<f64>, k: usize) -> SymMatrix {
        if self.layout.pred_free[k] {
            let r = self.layout.pred(k);
            smat(&x.rows(r.start, r.len()).into_owned(), self.layout.n).expect("layout dimension")
        } else {
            self.p.boundary.clone().expect("fixed boundary")
        }
    }

    fn pred_dense(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64> {
        if self.layout.pred_free[k] {
            let r = self.layout.pred(k);
            let mut m = DMatrix::zeros(self.layout.n, self.layout.n);
            for (j, e) in self.basis.iter().enumerate() {
                m += e * x[r.start + j];
            }
            m
        } else {
            self.boundary.clone().expect("fixed boundary")
        }
    }

    /// Interior check of the box and SPD cones for step `k`.
    fn step_eval(&self, x: &DVector<f64>, k: usize) -> Option<StepEval> {
        let s = &self.steps[k];
        let ur = self.layout.u(k);
        let mut qf = self.pred_dense(x, k);
        let qp = qf.clone();
        for (i, r1) in s.rank1.iter().enumerate() {
            let ui = x[ur.start + i];
            if !(ui > 0.0 && ui < s.caps[i]) {
                return None;
            }
            qf += r1 * ui;
        }
        let qp_chol = if self.layout.pred_free[k] { Some(cholesky_dense(&qp, 0.0).ok()?) } else { None };
        let qf_chol = cholesky_dense(&qf, 0.0).ok()?;
        Some(StepEval { qp, qf, qp_chol, qf_chol })
    }

    fn lmi(&self, k: usize, qp: &DMatrix<f64>, qf_prev: &DMatrix<f64>) -> DMatrix<f64> {
        let (a, wh) = &self.couplings[k - 1];
        lmi_block(qp, qf_prev, a, wh, 1.0)
    }

    fn lmi_pred_direction(&self, k: usize, e: &DMatrix<f64>) -> DMatrix<f64> {
        let (a, wh) = &self.couplings[k - 1];
        lmi_block(e, &DMatrix::zeros(self.layout.n, self.layout.n), a, wh, 0.0)
    }

    fn lmi_mid_direction(&self, k: usize, d: &DMatrix<f64>) -> DMatrix<f64> {
        let (a, wh) = &self.couplings[k - 1];
        lmi_block(&DMatrix::zeros(self.layout.n, self.layout.n), d, a, wh, 0.0)
    }

    /// Direction matrices `∂Q_filt/∂x_j` for the local variables of step `k`.
    fn local_directions(&self, k: usize) -> Vec<DMatrix<f64>> {
        let mut dirs = Vec::with_capacity(self.layout.local_len(k));
        if self.layout.pred_free[k] {
            dirs.extend(self.basis.iter().cloned());
        }
        dirs.extend(self.steps[k].rank1.iter().cloned());
        dirs
    }

    fn step_objective(&self, k: usize, ev: &StepEval) -> f64 {
        let s = &self.steps[k];
        let g = chol_inverse(&ev.qf_chol);
        let mut f = trace_product(&s.theta, &g) + trace_product(&s.linear, &ev.qf);
        f -= s.logdet_weight
            * match &ev.qp_chol {
                Some(l) => logdet_from_chol(l),
                None => self.boundary_logdet,
            };
        if let Some((rho, tp, tf)) = &s.prox {
            f += 0.5 * rho * ((&ev.qp - tp).norm_squared() + (&ev.qf - tf).norm_squared());
        }
        f
    }

    fn objective_at(&self, x: &DVector<f64>) -> Option<f64> {
        let mut f = 0.0;
        for k in 0..self.steps.len() {
            let ev = self.step_eval(x, k)?;
            f += self.step_objective(k, &ev);
        }
        Some(f)
    }

    fn default_start(&self) -> Result<DVector<f64>> {
        let n = self.layout.n;
        let mut q_pred: Vec<SymMatrix> = Vec::with_capacity(self.steps.len());
        let mut u = Vec::with_capacity(self.steps.len());
        let mut prev_filt: Option<DMatrix<f64>> = None;
        for (k, s) in self.steps.iter().enumerate() {
            let uk: Vec<f64> = s.caps.iter().map(|c| 0.5 * c).collect();
            let qp = if !self.layout.pred_free[k] {
                self.boundary.clone().unwrap()
            } else if k > 0 && !self.couplings.is_empty() {
                let (a, _) = &self.couplings[k - 1];
                let qf = prev_filt.as_ref().unwrap();
                let l = cholesky_dense(qf, 0.0)?;
                let cov = a * chol_inverse(&l) * a.transpose() + self.p.couplings[k - 1].w.to_dense();
                let lc = cholesky_dense(&cov, 0.0)?;
                chol_inverse(&lc) * 0.5
            } else if let Some((_, tp, _)) = &s.prox {
                clip_pd(tp)
            } else {
                DMatrix::identity(n, n)
            };
            let mut qf = qp.clone();
            for (i, r1) in s.rank1.iter().enumerate() {
                qf += r1 * uk[i];
            }
            prev_filt = Some(qf);
            q_pred.push(SymMatrix::from_dense(&qp));
            u.push(uk);
        }
        Ok(self.pack(&PrimalPoint { q_pred, u }))
    }
}

/// Eigenvalue clip keeping a matrix comfortably positive definite.
pub(crate) fn clip_pd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(crate::symkernel::symmetrize(m));
    let top = eig.eigenvalues.amax().max(1e-12);
    let floor = 1e-3 * top;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(floor)));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn scatter(
    hess: &mut DMatrix<f64>,
    grad: &mut DVector<f64>,
    idx: &[usize],
    g: &[f64],
    h: &DMatrix<f64>,
) {
    for (a, &i) in idx.iter().enumerate() {
        grad[i] += g[a];
        for (b, &j) in idx.iter().enumerate() {
            hess[(i, j)] += h[(a, b)];
        }
    }
}

impl BarrierProblem for Assembled<'_> {
    fn dim(&self) -> usize {
        self.layout.total
    }

    fn degree(&self) -> f64 {
        let n = self.layout.n as f64;
        let mut m = 0.0;
        for (k, s) in self.steps.iter().enumerate() {
            m += 2.0 * s.caps.len() as f64;
            if s.spd_barrier {
                m += n;
            }
            if k > 0 && !self.couplings.is_empty() {
                m += 3.0 * n;
            }
        }
        m
    }

    fn values(&self, x: &DVector<f64>) -> Option<(f64, f64)> {
        let mut f = 0.0;
        let mut phi = 0.0;
        let mut prev_qf: Option<DMatrix<f64>> = None;
        for k in 0..self.steps.len() {
            let ev = self.step_eval(x, k)?;
            f += self.step_objective(k, &ev);
            let s = &self.steps[k];
            for (i, c) in s.caps.iter().enumerate() {
                let ui = x[self.layout.u(k).start + i];
                phi -= ui.ln() + (c - ui).ln();
            }
            if s.spd_barrier {
                phi -= logdet_from_chol(ev.qp_chol.as_ref().unwrap());
            }
            if k > 0 && !self.couplings.is_empty() {
                let fm = self.lmi(k, &ev.qp, prev_qf.as_ref().unwrap());
                let l = cholesky_dense(&fm, 0.0).ok()?;
                phi -= logdet_from_chol(&l);
            }
            prev_qf = Some(ev.qf);
        }
        (f.is_finite() && phi.is_finite()).then_some((f, phi))
    }

    fn derivatives(&self, x: &DVector<f64>, wf: f64, wb: f64) -> Option<Derivatives> {
        let dim = self.layout.total;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        let mut prev: Option<(StepEval, Vec<DMatrix<f64>>)> = None;
        for k in 0..self.steps.len() {
            let ev = self.step_eval(x, k)?;
            let s = &self.steps[k];
            let dirs = self.local_directions(k);
            let nl = dirs.len();
            let np = self.layout.pred_len(k);
            let idx: Vec<usize> = self.layout.local(k).collect();
            let mut g = vec![0.0; nl];
            let mut h = DMatrix::zeros(nl, nl);

            // Tr(Θ Q_filt⁻¹) + Tr(L Q_filt) + prox on Q_filt
            let gi = chol_inverse(&ev.qf_chol);
            let t = &gi * &s.theta * &gi;
            let gd: Vec<DMatrix<f64>> = dirs.iter().map(|d| &gi * d).collect();
            let td: Vec<DMatrix<f64>> = dirs.iter().map(|d| &t * d).collect();
            for i in 0..nl {
                let mut gv = -td[i].trace() + trace_product(&s.linear, &dirs[i]);
                if let Some((rho, _, tf)) = &s.prox {
                    gv += rho * trace_product(&(&ev.qf - tf), &dirs[i]);
                }
                g[i] += wf * gv;
                for j in 0..=i {
                    let mut hv = trace_product(&td[i], &gd[j]) + trace_product(&td[j], &gd[i]);
                    if let Some((rho, _, _)) = &s.prox {
                        hv += rho * trace_product(&dirs[i], &dirs[j]);
                    }
                    h[(i, j)] += wf * hv;
                    if i != j {
                        h[(j, i)] += wf * hv;
                    }
                }
            }

            // −w log det Q_pred, SPD barrier and prox on Q_pred
            if let Some(lp) = &ev.qp_chol {
                let pinv = chol_inverse(lp);
                let pd: Vec<DMatrix<f64>> = self.basis.iter().map(|e| &pinv * e).collect();
                let coeff = wf * s.logdet_weight + if s.spd_barrier { wb } else { 0.0 };
                for i in 0..np {
                    g[i] -= coeff * pd[i].trace();
                    if let Some((rho, tp, _)) = &s.prox {
                        g[i] += wf * rho * trace_product(&(&ev.qp - tp), &self.basis[i]);
                        h[(i, i)] += wf * rho;
                    }
                    for j in 0..np {
                        h[(i, j)] += coeff * trace_product(&pd[i], &pd[j]);
                    }
                }
            }

            // box barrier on u
            for (i, c) in s.caps.iter().enumerate() {
                let ui = x[self.layout.u(k).start + i];
                let a = np + i;
                g[a] += wb * (-1.0 / ui + 1.0 / (c - ui));
                h[(a, a)] += wb * (1.0 / (ui * ui) + 1.0 / ((c - ui) * (c - ui)));
            }
            scatter(&mut hess, &mut grad, &idx, &g, &h);

            // coupling LMI with the previous step
            if k > 0 && !self.couplings.is_empty() && wb != 0.0 {
                let (pev, pdirs) = prev.as_ref().unwrap();
                let fm = self.lmi(k, &ev.qp, &pev.qf);
                let l = cholesky_dense(&fm, 0.0).ok()?;
                let finv = chol_inverse(&l);
                let mut lidx: Vec<usize> = self.layout.pred(k).collect();
                lidx.extend(self.layout.local(k - 1));
                let mut prods: Vec<DMatrix<f64>> = Vec::with_capacity(lidx.len());
                for e in self.basis.iter().take(np) {
                    prods.push(&finv * self.lmi_pred_direction(k, e));
                }
                for d in pdirs {
                    prods.push(&finv * self.lmi_mid_direction(k, d));
                }
                let nl2 = prods.len();
                let mut g2 = vec![0.0; nl2];
                let mut h2 = DMatrix::zeros(nl2, nl2);
                for i in 0..nl2 {
                    g2[i] = -wb * prods[i].trace();
                    for j in 0..=i {
                        let v = wb * trace_product(&prods[i], &prods[j]);
                        h2[(i, j)] = v;
                        h2[(j, i)] = v;
                    }
                }
                scatter(&mut hess, &mut grad, &lidx, &g2, &h2);
            }
            prev = Some((ev, dirs));
        }
        Some(Derivatives { grad, hess })
    }

    fn max_step(&self, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
        for k in 0..self.steps.len() {
            let s = &self.steps[k];
            let ur = self.layout.u(k);
            for (i, c) in s.caps.iter().enumerate() {
                let (ui, di) = (x[ur.start + i], dx[ur.start + i]);
                if di > 0.0 {
                    alpha = alpha.min((c - ui) / di);
                } else if di < 0.0 {
                    alpha = alpha.min(-ui / di);
                }
            }
            let qp = self.pred_dense(x, k);
            let dqp = if self.layout.pred_free[k] {
                let r = self.layout.pred(k);
                let mut m = DMatrix::zeros(self.layout.n, self.layout.n);
                for (j, e) in self.basis.iter().enumerate() {
                    m += e * dx[r.start + j];
                }
                m
            } else {
                DMatrix::zeros(self.layout.n, self.layout.n)
            };
            let mut qf = qp.clone();
            let mut dqf = dqp.clone();
            for (i, r1) in s.rank1.iter().enumerate() {
                qf += r1 * x[ur.start + i];
                dqf += r1 * dx[ur.start + i];
            }
            if let Ok(l) = cholesky_dense(&qf, 0.0) {
                alpha = alpha.min(cone_step(&l, &dqf));
            }
            if self.layout.pred_free[k] {
                if let Ok(l) = cholesky_dense(&qp, 0.0) {
                    alpha = alpha.min(cone_step(&l, &dqp));
                }
            }
            if k > 0 && !self.couplings.is_empty() {
                let (pqf, pdqf) = prev.as_ref().unwrap();
                let fm = self.lmi(k, &qp, pqf);
                let (a, wh) = &self.couplings[k - 1];
                let dfm = lmi_block(&dqp, pdqf, a, wh, 0.0);
                if let Ok(l) = cholesky_dense(&fm, 0.0) {
                    alpha = alpha.min(cone_step(&l, &dfm));
                }
            }
            prev = Some((qf, dqf));
        }
        alpha
    }
}

/// Solves a subproblem from the default strictly feasible start.
pub fn solve(p: &ConvexSubproblem, settings: &BarrierSettings) -> Result<SubproblemSolution> {
    solve_from(p, settings, None)
}

/// Solves a subproblem, starting from `start` when it is strictly feasible
/// (attention is first pulled into the interior of its box).
pub fn solve_from(
    p: &ConvexSubproblem,
    settings: &BarrierSettings,
    start: Option<&PrimalPoint>,
) -> Result<SubproblemSolution> {
    let asm = Assembled::new(p)?;
    let mut x0 = None;
    if let Some(st) = start {
        let mut st = st.clone();
        for (uk, s) in st.u.iter_mut().zip(&p.steps) {
            for (ui, c) in uk.iter_mut().zip(&s.caps) {
                *ui = ui.clamp(0.05 * c, 0.95 * c);
            }
        }
        let x = asm.pack(&st);
        if asm.values(&x).is_some() {
            x0 = Some(x);
        }
    }
    let x0 = match x0 {
        Some(x) => x,
        None => asm.default_start()?,
    };
    finish(p, &asm, x0, settings, None)
}

/// Largest centering decrement accepted at a warm re-entry point.
const WARM_DECREMENT: f64 = 100.0;

/// Re-solves a perturbed subproblem from the central path of a previous
/// solve, re-entering at the largest path parameter whose centered point is
/// still nearly centered for `p`. Falls back to a cold start.
pub fn solve_warm(
    p: &ConvexSubproblem,
    settings: &BarrierSettings,
    path: &[(f64, PrimalPoint)],
) -> Result<SubproblemSolution> {
    let asm = Assembled::new(p)?;
    for (t, point) in path.iter().rev() {
        let x = asm.pack(point);
        if barrier::centering_decrement(&asm, &x, *t).is_some_and(|d| d <= WARM_DECREMENT) {
            if let Ok(sol) = finish(p, &asm, x, settings, Some(*t)) {
                return Ok(sol);
            }
            break;
        }
    }
    solve(p, settings)
}

fn finish(
    p: &ConvexSubproblem,
    asm: &Assembled,
    x0: DVector<f64>,
    settings: &BarrierSettings,
    t_start: Option<f64>,
) -> Result<SubproblemSolution> {
    let out = barrier::minimize(asm, x0, settings, None, t_start)?;
    let point = asm.unpack(&out.x);
    let q_filt = p.filtered(&point);
    let path = out.centers.iter().map(|(t, x)| (*t, asm.unpack(x))).collect();
    Ok(SubproblemSolution { point, q_filt, objective: out.f0, report: out.report, path })
}

/// Objective value at a point, or `None` outside the open domain of the
/// objective (attention strictly inside its box, information matrices PD).
pub fn objective(p: &ConvexSubproblem, point: &PrimalPoint) -> Option<f64> {
    let asm = Assembled::new(p).ok()?;
    asm.objective_at(&asm.pack(point))
}

/// Whether `point` strictly satisfies every cone and box constraint.
pub fn is_strictly_feasible(p: &ConvexSubproblem, point: &PrimalPoint) -> bool {
    Assembled::new(p).ok().is_some_and(|asm| asm.values(&asm.pack(point)).is_some())
}

/// Max deviation between the analytic objective gradient and central
/// differences (step `h`) at a strictly feasible point.
pub fn gradient_check(p: &ConvexSubproblem, point: &PrimalPoint, h: f64) -> Result<f64> {
    let asm = Assembled::new(p)?;
    let x = asm.pack(point);
    let d = asm
        .derivatives(&x, 1.0, 0.0)
        .ok_or_else(|| Error::Infeasible("gradient check point outside the domain".into()))?;
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let (Some(fp), Some(fm)) = (asm.objective_at(&xp), asm.objective_at(&xm)) else {
            return Err(Error::Infeasible("finite-difference step left the domain".into()));
        };
        worst = worst.max(((fp - fm) / (2.0 * h) - d.grad[j]).abs());
    }
    Ok(worst)
}

/// Objective gradient in packed coordinates (svec blocks, then attention, per step).
pub fn objective_gradient(p: &ConvexSubproblem, point: &PrimalPoint) -> Result<DVector<f64>> {
    let asm = Assembled::new(p)?;
    asm.derivatives(&asm.pack(point), 1.0, 0.0)
        .map(|d| d.grad)
        .ok_or_else(|| Error::Infeasible("point outside the domain".into()))
}
