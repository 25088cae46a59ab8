//! Comparison policies and closed forms: greedy landmark selection and the
//! stationary scalar allocation problem.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{information_gain, AttentionVector};
use crate::symkernel::{SpdMatrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyBudget {
    /// Landmarks observed per step.
    pub k_select: usize,
}

impl Default for GreedyBudget {
    fn default() -> Self {
        GreedyBudget { k_select: 3 }
    }
}

/// `Tr(Θ (Q + Σ_{i∈S} V̂_i⁻¹ c_i c_iᵀ)⁻¹)`.
pub fn selection_cost(
    q_prior: &SpdMatrix,
    theta: &SymMatrix,
    c: &DMatrix<f64>,
    vhat_inv: &[f64],
    selected: &[usize],
) -> Result<f64> {
    let mut u = vec![0.0; vhat_inv.len()];
    for &i in selected {
        u[i] = vhat_inv[i];
    }
    let q = SpdMatrix::new(q_prior.as_sym().add(&information_gain(c, &u)))?;
    Ok(theta.inner(q.inverse().as_sym()))
}

/// Adds, one at a time, the landmark that most reduces the filtered LQG
/// cost until `budget.k_select` are chosen. Ties go to the lower index.
/// Returns the selection in pick order.
pub fn greedy_select(
    q_prior: &SpdMatrix,
    theta: &SymMatrix,
    c: &DMatrix<f64>,
    vhat_inv: &[f64],
    budget: GreedyBudget,
) -> Result<Vec<usize>> {
    let m = vhat_inv.len();
    if c.nrows() != m {
        return Err(Error::DimensionMismatch { expected: m, found: c.nrows() });
    }
    if budget.k_select > m {
        return Err(Error::Config(format!("greedy budget {} exceeds {m} landmarks", budget.k_select)));
    }
    let mut selected: Vec<usize> = Vec::with_capacity(budget.k_select);
    while selected.len() < budget.k_select {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..m).filter(|i| !selected.contains(i)) {
            let mut trial = selected.clone();
            trial.push(i);
            let cost = selection_cost(q_prior, theta, c, vhat_inv, &trial)?;
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, i));
            }
        }
        selected.push(best.expect("budget within landmark count").1);
    }
    Ok(selected)
}

/// Full attention on the selected landmarks, none elsewhere.
pub fn selection_attention(selected: &[usize], vhat_inv: &[f64]) -> AttentionVector {
    let mut a = AttentionVector::zeros(vhat_inv.to_vec());
    for &i in selected {
        a.u[i] = vhat_inv[i];
    }
    a
}

/// Scalar time-invariant system for the stationary allocation problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarSystem {
    pub a: f64,
    /// Process noise variance.
    pub w: f64,
    /// Stationary weight of the filtered variance.
    pub theta: f64,
    /// Best-case measurement noise variance.
    pub vhat: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Full-accuracy measurement, `P* = g(V̂)`.
    Full = 1,
    /// Partial attention.
    Interior = 2,
    /// No measurement, `P* = W / (1 − a²)`.
    Silent = 3,
}

/// Coefficient of `a²θWβ` under the square root of the stationary point.
///
/// `Derived` (2) solves the stationarity condition of
/// `θP + (β/2)·ln(a² + W/P)`; `Printed` (4) is the variant that treats the
/// log coefficient as `β`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryCoefficient {
    #[default]
    Derived,
    Printed,
}

impl StationaryCoefficient {
    fn factor(self) -> f64 {
        match self {
            StationaryCoefficient::Derived => 2.0,
            StationaryCoefficient::Printed => 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarySolution {
    /// Stationary filtered variance.
    pub p: f64,
    /// Measurement noise variance that realizes `p`; infinite when silent.
    pub v: f64,
    pub regime: Regime,
}

impl ScalarSystem {
    fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.theta > 0.0 && self.vhat > 0.0 && self.beta >= 0.0) {
            return Err(Error::Config(format!("invalid scalar system {self:?}")));
        }
        if !self.a.is_finite() || !self.w.is_finite() || !self.theta.is_finite() || !self.vhat.is_finite() {
            return Err(Error::Config(format!("non-finite scalar system {self:?}")));
        }
        Ok(())
    }

    fn require_stable(&self) -> Result<()> {
        if self.a.abs() >= 1.0 {
            return Err(Error::Diverges { a_abs: self.a.abs() });
        }
        Ok(())
    }
}

/// `g(V)`: positive root of `P⁻¹ = (a²P + W)⁻¹ + V⁻¹`, by bisection.
/// `V = ∞` gives the open-loop variance `W / (1 − a²)`.
pub fn scalar_riccati_fixed_point(sys: &ScalarSystem, v: f64) -> Result<f64> {
    sys.validate()?;
    let (a2, w) = (sys.a * sys.a, sys.w);
    if v.is_infinite() {
        sys.require_stable()?;
        return Ok(w / (1.0 - a2));
    }
    if !(v > 0.0) {
        return Err(Error::Config(format!("measurement variance must be positive, got {v}")));
    }
    // h is strictly decreasing in P with a single sign change
    let h = |p: f64| 1.0 / p - 1.0 / (a2 * p + w) - 1.0 / v;
    let mut lo = 1e-12;
    // P ≤ V always holds, so V bounds the root when the open-loop bound is unavailable
    let mut hi = if a2 < 1.0 { w / (1.0 - a2) + v } else { v };
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `V` such that `g(V) = p`; infinite at the open-loop variance.
pub fn scalar_riccati_inverse(sys: &ScalarSystem, p: f64) -> f64 {
    let inv_v = 1.0 / p - 1.0 / (sys.a * sys.a * p + sys.w);
    if inv_v <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / inv_v
    }
}

/// `θP + (β/2)·ln(a² + W/P)`, the stationary per-step cost.
pub fn scalar_objective(sys: &ScalarSystem, p: f64) -> f64 {
    sys.theta * p + 0.5 * sys.beta * (sys.a * sys.a + sys.w / p).ln()
}

/// Unconstrained positive stationary point `P(β)`.
pub fn scalar_stationary_point(sys: &ScalarSystem, coef: StationaryCoefficient) -> f64 {
    let (a2, tw) = (sys.a * sys.a, sys.theta * sys.w);
    let k = coef.factor();
    if a2 < 1e-14 {
        // a² P² + W P − k β W / (4θ) = 0 degenerates to a linear equation
        return k * sys.beta / (4.0 * sys.theta);
    }
    (-tw + (tw * tw + k * a2 * tw * sys.beta).sqrt()) / (2.0 * sys.theta * a2)
}

pub fn scalar_stationary_solution(sys: &ScalarSystem) -> Result<StationarySolution> {
    scalar_stationary_solution_with(sys, StationaryCoefficient::Derived)
}

/// Closed-form minimizer of the stationary problem over `[g(V̂), W/(1 − a²)]`.
pub fn scalar_stationary_solution_with(
    sys: &ScalarSystem,
    coef: StationaryCoefficient,
) -> Result<StationarySolution> {
    sys.require_stable()?;
    let lo = scalar_riccati_fixed_point(sys, sys.vhat)?;
    let hi = scalar_riccati_fixed_point(sys, f64::INFINITY)?;
    let p = if sys.beta.is_infinite() { hi } else { scalar_stationary_point(sys, coef) };
    let (p, regime) = if p <= lo {
        (lo, Regime::Full)
    } else if p >= hi {
        (hi, Regime::Silent)
    } else {
        (p, Regime::Interior)
    };
    let v = match regime {
        Regime::Full => sys.vhat,
        Regime::Silent => f64::INFINITY,
        Regime::Interior => scalar_riccati_inverse(sys, p),
    };
    Ok(StationarySolution { p, v, regime })
}

pub fn scalar_regime_thresholds(sys: &ScalarSystem) -> Result<(f64, f64)> {
    scalar_regime_thresholds_with(sys, StationaryCoefficient::Derived)
}

/// `(β₁, β₂)`: the weights at which the stationary point reaches `g(V̂)`
/// and `W / (1 − a²)`. `sys.beta` is ignored.
pub fn scalar_regime_thresholds_with(sys: &ScalarSystem, coef: StationaryCoefficient) -> Result<(f64, f64)> {
    sys.require_stable()?;
    let sys0 = ScalarSystem { beta: 0.0, ..*sys };
    let lo = scalar_riccati_fixed_point(&sys0, sys.vhat)?;
    let hi = scalar_riccati_fixed_point(&sys0, f64::INFINITY)?;
    let beta_at = |p: f64| 4.0 * sys.theta * p * (sys.a * sys.a * p + sys.w) / (coef.factor() * sys.w);
    Ok((beta_at(lo), beta_at(hi)))
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    // endpoints can beat the interior bracket when the minimum sits on them
    [lo, mid, hi].into_iter().min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
}

/// Numerical minimizer of the stationary per-step cost over `[g(V̂), W/(1 − a²)]`.
pub fn scalar_oracle(sys: &ScalarSystem) -> Result<f64> {
    sys.require_stable()?;
    let lo = scalar_riccati_fixed_point(sys, sys.vhat)?;
    let hi = scalar_riccati_fixed_point(sys, f64::INFINITY)?;
    Ok(golden_section(|p| scalar_objective(sys, p), lo, hi, 1e-13 * hi))
}

/// Stationary `θ = (a s b)² / (b² s + r)` of the scalar LQ regulator.
pub fn scalar_theta(a: f64, b: f64, q: f64, r: f64) -> Result<f64> {
    if !(q > 0.0 && r > 0.0) {
        return Err(Error::Config("scalar LQ weights must be positive".into()));
    }
    let mut s = q;
    for _ in 0..1_000_000 {
        let next = a * a * s - (a * s * b).powi(2) / (b * b * s + r) + q;
        if !next.is_finite() {
            break;
        }
        if (next - s).abs() <= 1e-15 * next.abs() {
            return Ok((a * next * b).powi(2) / (b * b * next + r));
        }
        s = next;
    }
    Err(Error::Diverges { a_abs: a.abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::GaussianStream;
    use proptest::prelude::*;

    fn sys(a: f64, w: f64, theta: f64, vhat: f64, beta: f64) -> ScalarSystem {
        ScalarSystem { a, w, theta, vhat, beta }
    }

    #[test]
    fn riccati_fixed_point_examples() {
        let s = sys(0.5, 1.0, 1.0, 1.0, 0.0);
        assert!((scalar_riccati_fixed_point(&s, f64::INFINITY).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let s0 = sys(0.0, 2.0, 1.0, 1.0, 0.0);
        let p = scalar_riccati_fixed_point(&s0, 3.0).unwrap();
        assert!((p - 6.0 / 5.0).abs() < 1e-11);
        // oracle: iterate the filter recursion
        let s9 = sys(0.9, 1.0, 1.0, 0.1, 0.0);
        let mut pf = 1.0;
        for _ in 0..100_000 {
            let pp = 0.81 * pf + 1.0;
            pf = 1.0 / (1.0 / pp + 10.0);
        }
        let g = scalar_riccati_fixed_point(&s9, 0.1).unwrap();
        assert!((g - pf).abs() <= 1e-11 * pf);
        assert!(matches!(
            scalar_riccati_fixed_point(&sys(1.0, 1.0, 1.0, 1.0, 0.0), f64::INFINITY),
            Err(Error::Diverges { .. })
        ));
        // unstable systems still have a finite root with measurements
        let unstable = scalar_riccati_fixed_point(&sys(1.5, 1.0, 1.0, 1.0, 0.0), 1.0).unwrap();
        assert!((1.0 / unstable - 1.0 / (2.25 * unstable + 1.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn g_is_strictly_increasing() {
        let s = sys(0.7, 0.5, 1.0, 0.1, 0.0);
        let mut prev = 0.0;
        for i in 1..200 {
            let v = 0.01 * 1.05f64.powi(i);
            let g = scalar_riccati_fixed_point(&s, v).unwrap();
            assert!(g > prev);
            prev = g;
        }
        assert!(prev < scalar_riccati_fixed_point(&s, f64::INFINITY).unwrap());
    }

    #[test]
    fn stationary_solution_limits() {
        let s = sys(0.5, 1.0, 1.0, 0.01, 0.0);
        let out = scalar_stationary_solution(&s).unwrap();
        assert_eq!(out.regime, Regime::Full);
        assert_eq!(out.p, scalar_riccati_fixed_point(&s, 0.01).unwrap());
        let big = scalar_stationary_solution(&ScalarSystem { beta: f64::INFINITY, ..s }).unwrap();
        assert_eq!(big.regime, Regime::Silent);
        assert_eq!(big.p, 4.0 / 3.0);
        assert!(big.v.is_infinite());
    }

    #[test]
    fn interior_solution_matches_golden_section() {
        let s = sys(0.5, 1.0, 1.0, 0.01, 1.0);
        let closed = scalar_stationary_solution(&s).unwrap();
        let oracle = scalar_oracle(&s).unwrap();
        assert_eq!(closed.regime, Regime::Interior);
        assert!((closed.p - oracle).abs() < 1e-6, "{} vs {}", closed.p, oracle);
        // the printed coefficient misses the oracle
        let printed = scalar_stationary_solution_with(&s, StationaryCoefficient::Printed).unwrap();
        assert!((printed.p - oracle).abs() > 1e-2);
        // recovering V through g round-trips
        assert!((scalar_riccati_fixed_point(&s, closed.v).unwrap() - closed.p).abs() < 1e-10);
    }

    #[test]
    fn thresholds_examples() {
        let s = sys(0.5, 1.0, 1.0, 0.01, 0.0);
        let (b1, b2) = scalar_regime_thresholds(&s).unwrap();
        assert!((b2 - 32.0 / 9.0).abs() < 1e-12);
        assert!(b1 < b2);
        // the oracle minimizer leaves the upper endpoint exactly at β₂
        let below = scalar_oracle(&ScalarSystem { beta: b2 * 0.99, ..s }).unwrap();
        let above = scalar_oracle(&ScalarSystem { beta: b2 * 1.01, ..s }).unwrap();
        assert!(below < 4.0 / 3.0 - 1e-6);
        assert!((above - 4.0 / 3.0).abs() < 1e-12);
        let (c1, c2) = scalar_regime_thresholds(&sys(0.5, 1.0, 1.0, 1e12, 0.0)).unwrap();
        assert!((c1 - c2).abs() < 1e-6 * c2);
    }

    #[test]
    fn regimes_match_oracle_endpoints() {
        let mut rng = GaussianStream::new(4);
        for _ in 0..50 {
            let s = sys(
                (0.3 + 0.65 * rng.next_uniform()) * if rng.next_uniform() < 0.5 { -1.0 } else { 1.0 },
                0.2 + 2.0 * rng.next_uniform(),
                0.2 + 2.0 * rng.next_uniform(),
                0.05 + rng.next_uniform(),
                0.0,
            );
            let (b1, b2) = scalar_regime_thresholds(&s).unwrap();
            let lo = scalar_riccati_fixed_point(&s, s.vhat).unwrap();
            let hi = s.w / (1.0 - s.a * s.a);
            for (beta, regime) in [(0.5 * b1, Regime::Full), (0.5 * (b1 + b2), Regime::Interior), (2.0 * b2, Regime::Silent)] {
                let sb = ScalarSystem { beta, ..s };
                let closed = scalar_stationary_solution(&sb).unwrap();
                let oracle = scalar_oracle(&sb).unwrap();
                assert_eq!(closed.regime, regime);
                assert!((closed.p - oracle).abs() <= 1e-6 * hi);
                match regime {
                    Regime::Full => assert!((oracle - lo).abs() <= 1e-9 * hi),
                    Regime::Silent => assert!((oracle - hi).abs() <= 1e-9 * hi),
                    Regime::Interior => assert!(oracle > lo && oracle < hi),
                }
            }
        }
    }

    #[test]
    fn scalar_theta_matches_riccati_tape() {
        use crate::lqg::{backward_riccati, CostWeights};
        use crate::plant::LtvWindow;
        let (a, b, q, r) = (0.9, 0.5, 1.0, 0.2);
        let ltv = LtvWindow {
            start: 0,
            a: vec![DMatrix::from_element(1, 1, a); 2000],
            b: vec![DMatrix::from_element(1, 1, b); 2000],
            c: vec![DMatrix::zeros(0, 1); 2000],
            w: SpdMatrix::identity(1),
        };
        let w = CostWeights {
            q: SpdMatrix::from_diagonal(&[q]).unwrap(),
            r: SpdMatrix::from_diagonal(&[r]).unwrap(),
        };
        let tape = backward_riccati(&ltv, &w).unwrap();
        let theta = scalar_theta(a, b, q, r).unwrap();
        assert!((tape.theta[0].get(0, 0) - theta).abs() < 1e-10 * theta);
    }

    fn random_instance(seed: u64, m: usize) -> (SpdMatrix, SymMatrix, DMatrix<f64>, Vec<f64>) {
        let mut rng = GaussianStream::new(seed);
        let q = SpdMatrix::from_diagonal(&[1.0 + rng.next_uniform(), 1.0 + rng.next_uniform(), 0.5]).unwrap();
        let g = DMatrix::from_fn(3, 3, |_, _| rng.next_gaussian());
        let theta = SymMatrix::from_dense(&(&g * g.transpose()));
        let c = DMatrix::from_fn(m, 3, |_, j| if j == 2 { -1.0 } else { rng.next_gaussian() });
        let caps = (0..m).map(|_| 1.0 + 10.0 * rng.next_uniform()).collect();
        (q, theta, c, caps)
    }

    #[test]
    fn greedy_examples() {
        let (q, th, c, caps) = random_instance(1, 4);
        let all = greedy_select(&q, &th, &c, &caps, GreedyBudget { k_select: 4 }).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        assert!(greedy_select(&q, &th, &c, &caps, GreedyBudget { k_select: 0 }).unwrap().is_empty());
        assert!(matches!(
            greedy_select(&q, &th, &c, &caps, GreedyBudget { k_select: 5 }),
            Err(Error::Config(_))
        ));
        let attn = selection_attention(&[1, 3], &caps);
        assert_eq!(attn.u, vec![0.0, caps[1], 0.0, caps[3]]);
    }

    #[test]
    fn greedy_pair_against_exhaustive_subsets() {
        for seed in 0..30 {
            let (q, th, c, caps) = random_instance(100 + seed, 4);
            let picks = greedy_select(&q, &th, &c, &caps, GreedyBudget { k_select: 2 }).unwrap();
            let greedy_cost = selection_cost(&q, &th, &c, &caps, &picks).unwrap();
            let mut best_pair = f64::INFINITY;
            let mut best_single = (f64::INFINITY, 0);
            for i in 0..4 {
                let ci = selection_cost(&q, &th, &c, &caps, &[i]).unwrap();
                if ci < best_single.0 {
                    best_single = (ci, i);
                }
                for j in i + 1..4 {
                    best_pair = best_pair.min(selection_cost(&q, &th, &c, &caps, &[i, j]).unwrap());
                }
            }
            assert!(greedy_cost >= best_pair - 1e-12);
            assert_eq!(picks[0], best_single.1);
        }
    }

    proptest! {
        #[test]
        fn greedy_single_pick_is_best_singleton(seed in 0u64..10_000, m in 1usize..8) {
            let (q, th, c, caps) = random_instance(seed, m);
            let pick = greedy_select(&q, &th, &c, &caps, GreedyBudget { k_select: 1 }).unwrap();
            let costs: Vec<f64> = (0..m).map(|i| selection_cost(&q, &th, &c, &caps, &[i]).unwrap()).collect();
            let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(costs[pick[0]], best);
        }
    }
}
