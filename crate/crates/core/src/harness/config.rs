//! JSON scenario configuration.
//!
//! Every key is optional; omitted keys take the defaults of the reference
//! scenario (16 landmarks, 4 m circle, 90 steps). Units are SI with angles in
//! radians, except keys ending in `_deg`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocator::CcpConfig;
use crate::baselines::GreedyBudget;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub radius: f64,
    /// `[x, y, θ]`
    pub start: [f64; 3],
    /// Overrides `start[2]` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_heading_deg: Option<f64>,
    /// Mission length `T` in steps.
    pub steps: usize,
    pub dt: f64,
    /// Fraction of the full circle covered over the mission.
    pub arc_fraction: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            radius: 4.0,
            start: [4.0, 0.0, FRAC_PI_2],
            start_heading_deg: None,
            steps: 90,
            dt: 1.0,
            arc_fraction: 0.95,
        }
    }
}

/// Explicit landmark positions, or a ring when `positions` is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandmarkConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
    pub ring_count: usize,
    pub ring_radius: f64,
    pub ring_center: [f64; 2],
}

impl Default for LandmarkConfig {
    fn default() -> Self {
        LandmarkConfig { positions: None, ring_count: 16, ring_radius: 5.0, ring_center: [0.0, 0.0] }
    }
}

impl LandmarkConfig {
    /// Ring landmarks sit at angles `(j + ½)·2π/count`, between the cardinal directions.
    pub fn resolved_positions(&self) -> Vec<[f64; 2]> {
        if let Some(p) = &self.positions {
            return p.clone();
        }
        (0..self.ring_count)
            .map(|j| {
                let ang = (j as f64 + 0.5) * 2.0 * PI / self.ring_count as f64;
                [self.ring_center[0] + self.ring_radius * ang.cos(), self.ring_center[1] + self.ring_radius * ang.sin()]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Diagonal of the process noise covariance `W`.
    pub w_diag: [f64; 3],
    /// Attention caps `V̂_i⁻¹`: one value for every landmark or one per landmark.
    pub vhat_inv: Vec<f64>,
    /// Bearing accuracy in degrees; sets every cap to `(σ·π/180)⁻²`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_deg: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { w_diag: [1.2e-3, 1.2e-3, 30e-3], vhat_inv: vec![14.6], sigma_deg: None }
    }
}

/// `(σ·π/180)⁻²`
pub fn vhat_inv_from_deg(sigma_deg: f64) -> f64 {
    (sigma_deg * PI / 180.0).powi(-2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub q_diag: [f64; 3],
    pub r_diag: [f64; 2],
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { q_diag: [0.3, 0.3, 1.6], r_diag: [3.5e-3, 3.5e-3] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[default]
    #[serde(rename = "ccp-centralized")]
    CcpCentralized,
    #[serde(rename = "ccp-admm")]
    CcpAdmm,
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "none")]
    None,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationConfig {
    /// Weight of directed information, measured in nats.
    pub beta: f64,
    pub horizon: usize,
    pub method: Method,
    pub greedy_budget: GreedyBudget,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        AllocationConfig { beta: 18.0, horizon: 10, method: Method::CcpCentralized, greedy_budget: GreedyBudget::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub ccp: CcpConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub reference: ReferenceConfig,
    pub landmarks: LandmarkConfig,
    pub noise: NoiseConfig,
    pub weights: WeightConfig,
    pub allocation: AllocationConfig,
    pub solver: SolverConfig,
    pub rng_seed: u64,
    /// Diagonal of the initial covariance `P_{1|0}`.
    pub p_init_diag: [f64; 3],
    /// Log solver wall time; off by default so traces are reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            reference: ReferenceConfig::default(),
            landmarks: LandmarkConfig::default(),
            noise: NoiseConfig::default(),
            weights: WeightConfig::default(),
            allocation: AllocationConfig::default(),
            solver: SolverConfig::default(),
            rng_seed: 0,
            p_init_diag: [0.01, 0.01, 0.01],
            record_wall_time: false,
        }
    }
}

fn positive(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(Error::Config(format!("{name} must be positive and finite, got {v}"))),
        None => Ok(()),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.reference;
        if r.steps < 2 {
            return Err(Error::Config(format!("reference.steps must be at least 2, got {}", r.steps)));
        }
        positive("reference.radius", &[r.radius])?;
        positive("reference.dt", &[r.dt])?;
        if !(r.arc_fraction.is_finite() && r.start.iter().all(|v| v.is_finite())) {
            return Err(Error::Config("reference values must be finite".into()));
        }
        positive("noise.w_diag", &self.noise.w_diag)?;
        positive("noise.vhat_inv", &self.noise.vhat_inv)?;
        if let Some(s) = self.noise.sigma_deg {
            positive("noise.sigma_deg", &[s])?;
        }
        positive("weights.q_diag", &self.weights.q_diag)?;
        positive("weights.r_diag", &self.weights.r_diag)?;
        positive("p_init_diag", &self.p_init_diag)?;
        let m = self.landmarks.resolved_positions().len();
        let caps = self.noise.vhat_inv.len();
        if caps != 1 && caps != m {
            return Err(Error::Config(format!("noise.vhat_inv has {caps} entries for {m} landmarks")));
        }
        if self.landmarks.positions.is_none() {
            positive("landmarks.ring_radius", &[self.landmarks.ring_radius])?;
        }
        let a = &self.allocation;
        if !(a.beta >= 0.0 && a.beta.is_finite()) {
            return Err(Error::Config(format!("allocation.beta must be finite and nonnegative, got {}", a.beta)));
        }
        if a.method == Method::Greedy && a.greedy_budget.k_select > m {
            return Err(Error::Config(format!("greedy budget {} exceeds {m} landmarks", a.greedy_budget.k_select)));
        }
        Ok(())
    }

    /// Per-landmark caps after applying `sigma_deg` and broadcasting.
    pub fn resolved_vhat_inv(&self) -> Vec<f64> {
        let m = self.landmarks.resolved_positions().len();
        match self.noise.sigma_deg {
            Some(s) => vec![vhat_inv_from_deg(s); m],
            None if self.noise.vhat_inv.len() == 1 => vec![self.noise.vhat_inv[0]; m],
            None => self.noise.vhat_inv.clone(),
        }
    }

    /// Same scenario with every default and derived key written out.
    pub fn resolved(&self) -> ScenarioConfig {
        let mut out = self.clone();
        out.landmarks.positions = Some(self.landmarks.resolved_positions());
        out.noise.vhat_inv = self.resolved_vhat_inv();
        out.noise.sigma_deg = None;
        if let Some(h) = self.reference.start_heading_deg {
            out.reference.start[2] = h.to_radians();
            out.reference.start_heading_deg = None;
        }
        out
    }

    /// SHA-256 of the resolved configuration with the seed zeroed: runs that
    /// differ only in their seed share a hash.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut canon = self.resolved();
        canon.rng_seed = 0;
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
