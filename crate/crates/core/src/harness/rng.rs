//! Portable, seedable noise source.
//!
//! Bit-stream contract: a `ChaCha8Rng` seeded with `seed_from_u64(seed)`
//! (rand_core's PCG32 seed expansion). Each uniform consumes one `u64` and keeps
//! its top 53 bits, mapped to the open interval `(0, 1)` as `(k + 0.5) / 2^53`.
//! Gaussians use the Box–Muller transform on consecutive uniform pairs
//! `(u1, u2)`, yielding `r·cos(2π·u2)` first and `r·sin(2π·u2)` on the next
//! call, with `r = sqrt(-2 ln u1)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn next_uniform(&mut self) -> f64 {
        let k = self.rng.next_u64() >> 11;
        (k as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Zero-mean Gaussian with the given per-component variances.
    pub fn gaussian_diag(&mut self, variances: &[f64]) -> Vec<f64> {
        variances.iter().map(|v| v.sqrt() * self.next_gaussian()).collect()
    }
}
