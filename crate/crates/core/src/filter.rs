//! Information-form Kalman filter with per-landmark attention.
//!
//! Attention `u_i` is the inverse measurement-noise variance granted to
//! landmark `i`; `u_i = 0` switches the landmark off without ever forming an
//! infinite variance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::plant::wrap_angle;
use crate::symkernel::{SpdMatrix, SymMatrix};

/// Tolerance on the attention box `0 ≤ u_i ≤ cap_i`.
pub const ATTENTION_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeliefKind {
    Predicted,
    Filtered,
}

#[derive(Clone, Debug)]
pub struct Belief {
    /// Mean in deviation coordinates.
    pub mean: DVector<f64>,
    /// Fisher information, the inverse error covariance.
    pub info: SpdMatrix,
    pub kind: BeliefKind,
}

impl Belief {
    pub fn predicted(mean: DVector<f64>, info: SpdMatrix) -> Self {
        Belief { mean, info, kind: BeliefKind::Predicted }
    }

    pub fn covariance(&self) -> SpdMatrix {
        self.info.inverse()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionVector {
    pub u: Vec<f64>,
    pub vhat_inv: Vec<f64>,
}

impl AttentionVector {
    pub fn new(u: Vec<f64>, vhat_inv: Vec<f64>) -> Result<Self> {
        if u.len() != vhat_inv.len() {
            return Err(Error::DimensionMismatch { expected: vhat_inv.len(), found: u.len() });
        }
        for (i, (&ui, &cap)) in u.iter().zip(&vhat_inv).enumerate() {
            if !(ui >= -ATTENTION_SLACK && ui <= cap + ATTENTION_SLACK) {
                return Err(Error::Config(format!(
                    "attention {ui} for landmark {i} outside [0, {cap}]"
                )));
            }
        }
        Ok(AttentionVector { u, vhat_inv })
    }

    pub fn zeros(vhat_inv: Vec<f64>) -> Self {
        AttentionVector { u: vec![0.0; vhat_inv.len()], vhat_inv }
    }

    pub fn full(vhat_inv: Vec<f64>) -> Self {
        AttentionVector { u: vhat_inv.clone(), vhat_inv }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.u.iter().sum()
    }

    /// Landmarks whose attention exceeds `fraction` of their cap.
    pub fn active(&self, fraction: f64) -> Vec<usize> {
        self.u
            .iter()
            .zip(&self.vhat_inv)
            .enumerate()
            .filter(|(_, (u, cap))| **u > fraction * **cap)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `Cᵀ diag(u) C`.
pub fn information_gain(c: &DMatrix<f64>, u: &[f64]) -> SymMatrix {
    let n = c.ncols();
    let mut g = DMatrix::zeros(n, n);
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        let row = c.row(i);
        g += ui * row.transpose() * row;
    }
    SymMatrix::from_dense(&g)
}

/// Time update: `x̂' = A x̂ + B u`, `Q' = (A Q⁻¹ Aᵀ + W)⁻¹`.
pub fn predict(
    b: &Belief,
    a: &DMatrix<f64>,
    bmat: &DMatrix<f64>,
    u: &DVector<f64>,
    w: &SpdMatrix,
) -> Result<Belief> {
    debug_assert_eq!(b.kind, BeliefKind::Filtered);
    let mean = a * &b.mean + bmat * u;
    let cov = b.info.inverse().as_sym().congruence(a).add(w.as_sym());
    let info = SpdMatrix::new(cov)?.inverse();
    Ok(Belief { mean, info, kind: BeliefKind::Predicted })
}

/// Measurement update for bearing measurements; innovations are wrapped to `(-π, π]`.
pub fn update(b: &Belief, y: &DVector<f64>, c: &DMatrix<f64>, attn: &AttentionVector) -> Result<Belief> {
    update_with(b, y, c, attn, wrap_angle)
}

/// Measurement update for a plain linear sensor (no innovation wrapping).
pub fn update_linear(
    b: &Belief,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
    attn: &AttentionVector,
) -> Result<Belief> {
    update_with(b, y, c, attn, |r| r)
}

fn update_with(
    b: &Belief,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
    attn: &AttentionVector,
    wrap: impl Fn(f64) -> f64,
) -> Result<Belief> {
    debug_assert_eq!(b.kind, BeliefKind::Predicted);
    let m = attn.len();
    if c.nrows() != m || y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: c.nrows().min(y.len()) });
    }
    if c.ncols() != b.mean.len() {
        return Err(Error::DimensionMismatch { expected: b.mean.len(), found: c.ncols() });
    }
    let info = SpdMatrix::new(b.info.as_sym().add(&information_gain(c, &attn.u)))?;
    // information-form gain: x̂ += Q⁻¹ Cᵀ U (y − C x̂), skipping unattended rows
    let mut weighted = DVector::zeros(b.mean.len());
    for i in 0..m {
        let ui = attn.u[i];
        if ui == 0.0 {
            continue;
        }
        let row = c.row(i);
        let innovation = wrap(y[i] - (row * &b.mean)[(0, 0)]);
        weighted += ui * innovation * row.transpose();
    }
    let mean = &b.mean + info.solve(&weighted);
    Ok(Belief { mean, info, kind: BeliefKind::Filtered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::GaussianStream;
    use crate::symkernel::min_eigenvalue;

    fn spd3(seed: f64) -> SpdMatrix {
        let l = DMatrix::from_row_slice(3, 3, &[1.0 + seed, 0.0, 0.0, 0.3, 0.8, 0.0, -0.4 * seed, 0.2, 1.2]);
        SpdMatrix::new(SymMatrix::from_dense(&(&l * l.transpose()))).unwrap()
    }

    fn filtered(mean: DVector<f64>, info: SpdMatrix) -> Belief {
        Belief { mean, info, kind: BeliefKind::Filtered }
    }

    #[test]
    fn predict_examples() {
        let b = filtered(DVector::from_column_slice(&[0.1, -0.2, 0.3]), spd3(0.5));
        let w = SpdMatrix::new(SymMatrix::identity(3).scale(1e-11)).unwrap();
        let p = predict(&b, &DMatrix::identity(3, 3), &DMatrix::zeros(3, 2), &DVector::zeros(2), &w).unwrap();
        assert!((&p.mean - &b.mean).amax() == 0.0);
        assert!((p.info.to_dense() - b.info.to_dense()).amax() < 1e-6 * b.info.to_dense().amax());

        let s = filtered(DVector::zeros(1), SpdMatrix::from_diagonal(&[1.0]).unwrap());
        let one = DMatrix::from_element(1, 1, 1.0);
        let p = predict(&s, &one, &one, &DVector::zeros(1), &SpdMatrix::from_diagonal(&[1.0]).unwrap()).unwrap();
        assert!((p.info.as_sym().get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn predict_information_form_matches_covariance_form() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, -0.3, 0.0, 0.9, 0.2, 0.05, 0.0, 1.1]);
        let bm = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.2, 0.1, 0.0, 1.0]);
        let b = filtered(DVector::from_column_slice(&[1.0, 2.0, -1.0]), spd3(0.7));
        let w = SpdMatrix::from_diagonal(&[0.3, 0.2, 0.1]).unwrap();
        let u = DVector::from_column_slice(&[0.4, -0.6]);
        let p = predict(&b, &a, &bm, &u, &w).unwrap();
        let cov = &a * b.info.inverse_dense() * a.transpose() + w.to_dense();
        assert!((p.info.inverse_dense() - cov).amax() < 1e-9);
        assert!((p.mean - (&a * &b.mean + &bm * &u)).amax() < 1e-12);
    }

    #[test]
    fn zero_attention_leaves_belief_untouched() {
        let b = Belief::predicted(DVector::from_column_slice(&[0.1, 0.2, 0.3]), spd3(0.2));
        let c = DMatrix::from_row_slice(2, 3, &[0.3, -0.1, -1.0, 0.2, 0.5, -1.0]);
        // NaN measurements prove unattended rows are never read
        let y = DVector::from_column_slice(&[f64::NAN, f64::NAN]);
        let post = update(&b, &y, &c, &AttentionVector::zeros(vec![5.0, 5.0])).unwrap();
        assert_eq!(post.mean, b.mean);
        assert_eq!(post.info, b.info);
    }

    #[test]
    fn scalar_update_halves_variance() {
        let b = Belief::predicted(DVector::zeros(1), SpdMatrix::from_diagonal(&[1.0]).unwrap());
        let post = update_linear(
            &b,
            &DVector::from_element(1, 0.0),
            &DMatrix::from_element(1, 1, 1.0),
            &AttentionVector::full(vec![1.0]),
        )
        .unwrap();
        assert!((post.covariance().as_sym().get(0, 0) - 0.5).abs() < 1e-15);
    }

    fn covariance_form_update(
        b: &Belief,
        y: &DVector<f64>,
        c: &DMatrix<f64>,
        u: &[f64],
    ) -> (DVector<f64>, DMatrix<f64>) {
        let p = b.info.inverse_dense();
        let v = DMatrix::from_diagonal(&DVector::from_iterator(u.len(), u.iter().map(|x| 1.0 / x)));
        let s = c * &p * c.transpose() + v;
        let l = &p * c.transpose() * s.try_inverse().unwrap();
        let mean = &b.mean + &l * (y - c * &b.mean);
        let cov = &p - &l * c * &p;
        (mean, cov)
    }

    #[test]
    fn information_form_matches_textbook_update() {
        let b = Belief::predicted(DVector::from_column_slice(&[0.05, -0.02, 0.01]), spd3(0.4));
        let c = DMatrix::from_row_slice(2, 3, &[0.25, -0.1, -1.0, -0.3, 0.2, -1.0]);
        let y = DVector::from_column_slice(&[0.03, -0.07]);
        let attn = AttentionVector::full(vec![14.6, 14.6]);
        let post = update(&b, &y, &c, &attn).unwrap();
        let (mean, cov) = covariance_form_update(&b, &y, &c, &attn.u);
        assert!((post.mean - mean).amax() < 1e-9);
        assert!((post.info.inverse_dense() - cov).amax() < 1e-9);
    }

    #[test]
    fn empirical_error_covariance_matches_riccati() {
        let a = DMatrix::from_row_slice(2, 2, &[0.95, 0.1, 0.0, 0.9]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]);
        let w = SpdMatrix::from_diagonal(&[0.05, 0.02]).unwrap();
        let attn = AttentionVector::new(vec![4.0, 1.5], vec![10.0, 10.0]).unwrap();
        let mut rng = GaussianStream::new(11);
        let wsd = [0.05f64.sqrt(), 0.02f64.sqrt()];
        let mut x = DVector::zeros(2);
        let mut belief = Belief::predicted(DVector::zeros(2), SpdMatrix::identity(2));
        let mut acc = DMatrix::zeros(2, 2);
        let mut count = 0.0;
        let mut riccati = DMatrix::zeros(2, 2);
        for k in 0..10_500 {
            let y = DVector::from_iterator(
                2,
                (0..2).map(|i| (c.row(i) * &x)[(0, 0)] + rng.next_gaussian() / attn.u[i].sqrt()),
            );
            let post = update_linear(&belief, &y, &c, &attn).unwrap();
            if k >= 500 {
                let e = &x - &post.mean;
                acc += &e * e.transpose();
                count += 1.0;
                riccati = post.info.inverse_dense();
            }
            x = &a * x + DVector::from_iterator(2, (0..2).map(|i| wsd[i] * rng.next_gaussian()));
            belief = predict(&post, &a, &DMatrix::zeros(2, 1), &DVector::zeros(1), &w).unwrap();
        }
        let empirical = acc / count;
        let rel = (&empirical - &riccati).norm() / riccati.norm();
        assert!(rel < 0.05, "relative error {rel}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn update_is_monotone_and_matches_covariance_form(
                s in 0.0f64..1.0,
                rows in prop::collection::vec(-1.0f64..1.0, 9),
                u in prop::collection::vec(0.01f64..20.0, 3),
                y in prop::collection::vec(-0.3f64..0.3, 3),
            ) {
                let b = Belief::predicted(DVector::from_column_slice(&[0.02, 0.01, -0.03]), spd3(s));
                let c = DMatrix::from_row_slice(3, 3, &rows);
                let y = DVector::from_column_slice(&y);
                let attn = AttentionVector::new(u.clone(), vec![20.0; 3]).unwrap();
                let post = update_linear(&b, &y, &c, &attn).unwrap();
                let gain = post.info.as_sym().sub(b.info.as_sym());
                prop_assert!(min_eigenvalue(&gain) >= -1e-10);
                let (mean, cov) = covariance_form_update(&b, &y, &c, &u);
                prop_assert!((post.mean - mean).amax() < 1e-8);
                prop_assert!((post.info.inverse_dense() - cov).amax() < 1e-8);
            }
        }
    }
}
