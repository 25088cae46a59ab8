//! Euclidean projection onto the relaxed Riccati LMI, the consensus step of
//! the distributed solver.
//!
//! The constraint set couples each `Q_pred_k` only with `Q_filt_{k-1}`, so the
//! projection splits into independent pairs. `Q_pred_0` is pinned to the
//! boundary value and the trailing `Q_filt_H`, which enters no LMI, is left
//! at its target.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::barrier::{self, BarrierProblem, BarrierSettings, Derivatives};
use super::{chol_inverse, clip_pd, cone_step, logdet_from_chol, Coupling};
use crate::error::{Error, Result};
use crate::symkernel::{cholesky_dense, psd_sqrt, smat, svec, svec_basis, trace_product, SymMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZStepSettings {
    /// Absolute duality gap of each pairwise projection.
    pub abs_gap: f64,
    pub barrier: BarrierSettings,
}

impl Default for ZStepSettings {
    fn default() -> Self {
        ZStepSettings { abs_gap: 1e-11, barrier: BarrierSettings::default() }
    }
}

/// `[[P, P·A, P·W½], [Aᵀ·P, F, 0], [W½·P, 0, c·I]]`.
pub(crate) fn lmi_block(
    p: &DMatrix<f64>,
    f: &DMatrix<f64>,
    a: &DMatrix<f64>,
    wh: &DMatrix<f64>,
    c: f64,
) -> DMatrix<f64> {
    let n = p.nrows();
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    let pa = p * a;
    let pw = p * wh;
    m.view_mut((0, 0), (n, n)).copy_from(p);
    m.view_mut((0, n), (n, n)).copy_from(&pa);
    m.view_mut((n, 0), (n, n)).copy_from(&pa.transpose());
    m.view_mut((0, 2 * n), (n, n)).copy_from(&pw);
    m.view_mut((2 * n, 0), (n, n)).copy_from(&pw.transpose());
    m.view_mut((n, n), (n, n)).copy_from(f);
    for i in 0..n {
        m[(2 * n + i, 2 * n + i)] = c;
    }
    m
}

struct PairProjection<'a> {
    n: usize,
    target: DVector<f64>,
    a: &'a DMatrix<f64>,
    wh: DMatrix<f64>,
    basis: Vec<DMatrix<f64>>,
}

impl PairProjection<'_> {
    fn split(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let nsv = self.basis.len();
        let mut p = DMatrix::zeros(self.n, self.n);
        let mut f = DMatrix::zeros(self.n, self.n);
        for (j, e) in self.basis.iter().enumerate() {
            p += e * x[j];
            f += e * x[nsv + j];
        }
        (p, f)
    }

    fn direction(&self, j: usize) -> DMatrix<f64> {
        let nsv = self.basis.len();
        let z = DMatrix::zeros(self.n, self.n);
        if j < nsv {
            lmi_block(&self.basis[j], &z, self.a, &self.wh, 0.0)
        } else {
            lmi_block(&z, &self.basis[j - nsv], self.a, &self.wh, 0.0)
        }
    }
}

impl BarrierProblem for PairProjection<'_> {
    fn dim(&self) -> usize {
        2 * self.basis.len()
    }

    fn degree(&self) -> f64 {
        3.0 * self.n as f64
    }

    fn values(&self, x: &DVector<f64>) -> Option<(f64, f64)> {
        let (p, f) = self.split(x);
        let l = cholesky_dense(&lmi_block(&p, &f, self.a, &self.wh, 1.0), 0.0).ok()?;
        Some(((x - &self.target).norm_squared(), -logdet_from_chol(&l)))
    }

    fn derivatives(&self, x: &DVector<f64>, wf: f64, wb: f64) -> Option<Derivatives> {
        let (p, f) = self.split(x);
        let l = cholesky_dense(&lmi_block(&p, &f, self.a, &self.wh, 1.0), 0.0).ok()?;
        let finv = chol_inverse(&l);
        let d = self.dim();
        let prods: Vec<DMatrix<f64>> = (0..d).map(|j| &finv * self.direction(j)).collect();
        let mut grad = (x - &self.target) * (2.0 * wf);
        let mut hess = DMatrix::identity(d, d) * (2.0 * wf);
        for i in 0..d {
            grad[i] -= wb * prods[i].trace();
            for j in 0..=i {
                let v = wb * trace_product(&prods[i], &prods[j]);
                hess[(i, j)] += v;
                if i != j {
                    hess[(j, i)] += v;
                }
            }
        }
        Some(Derivatives { grad, hess })
    }

    fn max_step(&self, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
        let (p, f) = self.split(x);
        let (dp, df) = self.split(dx);
        match cholesky_dense(&lmi_block(&p, &f, self.a, &self.wh, 1.0), 0.0) {
            Ok(l) => cone_step(&l, &lmi_block(&dp, &df, self.a, &self.wh, 0.0)),
            Err(_) => 0.0,
        }
    }
}

/// Projects `(pred, filt_prev)` onto `{LMI(P, F) ⪰ 0}` in the Frobenius norm.
///
/// A strictly feasible pair is returned unchanged; otherwise the projection is
/// computed by a barrier method and lands strictly inside the set, within the
/// configured duality gap of the exact projection.
pub fn project_pair(
    pred: &SymMatrix,
    filt_prev: &SymMatrix,
    coupling: &Coupling,
    settings: &ZStepSettings,
) -> Result<(SymMatrix, SymMatrix)> {
    let n = pred.dim();
    if filt_prev.dim() != n || coupling.a.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: filt_prev.dim() });
    }
    let wh = psd_sqrt(&coupling.w.to_dense());
    if cholesky_dense(&lmi_block(&pred.to_dense(), &filt_prev.to_dense(), &coupling.a, &wh, 1.0), 0.0).is_ok() {
        return Ok((pred.clone(), filt_prev.clone()));
    }
    let nsv = n * (n + 1) / 2;
    let mut target = DVector::zeros(2 * nsv);
    target.rows_mut(0, nsv).copy_from(&svec(pred));
    target.rows_mut(nsv, nsv).copy_from(&svec(filt_prev));
    let prob = PairProjection { n, target, a: &coupling.a, wh, basis: (0..nsv).map(|k| svec_basis(n, k)).collect() };

    // strictly feasible start: half the largest admissible prediction for a clipped F
    let f0 = clip_pd(&filt_prev.to_dense());
    let cov = &coupling.a * chol_inverse(&cholesky_dense(&f0, 0.0)?) * coupling.a.transpose() + coupling.w.to_dense();
    let p0 = chol_inverse(&cholesky_dense(&cov, 0.0)?) * 0.5;
    let mut x0 = DVector::zeros(2 * nsv);
    x0.rows_mut(0, nsv).copy_from(&svec(&SymMatrix::from_dense(&p0)));
    x0.rows_mut(nsv, nsv).copy_from(&svec(&SymMatrix::from_dense(&f0)));

    let out = barrier::minimize(&prob, x0, &settings.barrier, Some(settings.abs_gap), None)?;
    Ok((
        smat(&out.x.rows(0, nsv).into_owned(), n)?,
        smat(&out.x.rows(nsv, nsv).into_owned(), n)?,
    ))
}

/// Projects stacked targets `(pred_0..pred_H, filt_0..filt_H)` onto the
/// constraint set of a window; pairs are solved in parallel and merged in
/// index order.
pub fn solve_zstep(
    pred: &[SymMatrix],
    filt: &[SymMatrix],
    couplings: &[Coupling],
    boundary: &SymMatrix,
    settings: &ZStepSettings,
) -> Result<(Vec<SymMatrix>, Vec<SymMatrix>)> {
    let len = pred.len();
    if filt.len() != len || couplings.len() + 1 != len {
        return Err(Error::DimensionMismatch { expected: len, found: filt.len().min(couplings.len() + 1) });
    }
    let pairs: Vec<(SymMatrix, SymMatrix)> = (1..len)
        .into_par_iter()
        .map(|k| project_pair(&pred[k], &filt[k - 1], &couplings[k - 1], settings))
        .collect::<Result<_>>()?;
    let mut s_pred = Vec::with_capacity(len);
    let mut s_filt = Vec::with_capacity(len);
    s_pred.push(boundary.clone());
    for (p, f) in pairs {
        s_pred.push(p);
        s_filt.push(f);
    }
    // the trailing filtered slack appears in no LMI: its minimizer is the target
    s_filt.push(filt[len - 1].clone());
    Ok((s_pred, s_filt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symkernel::SpdMatrix;

    fn scalar_coupling(a: f64, w: f64) -> Coupling {
        Coupling { a: DMatrix::from_element(1, 1, a), w: SpdMatrix::from_diagonal(&[w]).unwrap() }
    }

    fn s(v: f64) -> SymMatrix {
        SymMatrix::from_diagonal(&[v])
    }

    #[test]
    fn feasible_pair_passes_through() {
        let c = scalar_coupling(0.9, 0.5);
        // p ≤ f / (a² + w f) = 2 / (0.81 + 1) ≈ 1.105
        let (p, f) = project_pair(&s(0.7), &s(2.0), &c, &ZStepSettings::default()).unwrap();
        assert_eq!(p, s(0.7));
        assert_eq!(f, s(2.0));
    }

    #[test]
    fn scalar_projection_matches_grid_search() {
        let (a, w) = (0.9, 0.5);
        let c = scalar_coupling(a, w);
        for &(vp, vf) in &[(3.0, 1.0), (1.5, 0.2), (2.0, -0.5), (-0.3, 4.0)] {
            let (p, f) = project_pair(&s(vp), &s(vf), &c, &ZStepSettings::default()).unwrap();
            let (p, f) = (p.get(0, 0), f.get(0, 0));
            assert!(p <= f / (a * a + w * f) + 1e-9 && f > 0.0 && p >= -1e-9);
            // brute force over the boundary curve and the p = 0 edge
            let mut best = f64::INFINITY;
            for i in 1..=200_000 {
                let ff = i as f64 * 5e-5;
                let pmax = ff / (a * a + w * ff);
                let pp = vp.clamp(0.0, pmax);
                best = best.min((pp - vp).powi(2) + (ff - vf).powi(2));
            }
            let got = (p - vp).powi(2) + (f - vf).powi(2);
            assert!((got.sqrt() - best.sqrt()).abs() < 1e-4, "{vp},{vf}: {got} vs {best}");
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let w = SpdMatrix::from_diagonal(&[1.2e-3, 1.2e-3, 3e-2]).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -0.4, 0.0, 1.0, 0.2, 0.0, 0.0, 1.0]);
        let c = Coupling { a, w };
        let pred = SymMatrix::from_fn(3, |i, j| if i == j { 800.0 } else { 40.0 });
        let filt = SymMatrix::from_fn(3, |i, j| if i == j { 30.0 } else { -2.0 });
        let settings = ZStepSettings::default();
        let (p1, f1) = project_pair(&pred, &filt, &c, &settings).unwrap();
        let (p2, f2) = project_pair(&p1, &f1, &c, &settings).unwrap();
        assert!(p1.sub(&p2).frobenius_norm() <= 1e-9 * p1.frobenius_norm());
        assert!(f1.sub(&f2).frobenius_norm() <= 1e-9 * f1.frobenius_norm());
        assert!(p1.sub(&pred).frobenius_norm() > 1.0, "target was infeasible");
    }

    #[test]
    fn zstep_pins_boundary_and_copies_tail() {
        let c = scalar_coupling(1.0, 0.1);
        let pred = vec![s(9.0), s(0.5), s(0.4)];
        let filt = vec![s(3.0), s(2.0), s(-1.0)];
        let (sp, sf) = solve_zstep(&pred, &filt, &[c.clone(), c], &s(1.0), &ZStepSettings::default()).unwrap();
        assert_eq!(sp[0], s(1.0));
        assert_eq!(sf[2], s(-1.0));
        assert_eq!(sp[1], s(0.5));
        assert_eq!(sf[0], s(3.0));
    }
}
