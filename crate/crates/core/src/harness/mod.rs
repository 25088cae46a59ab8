//! Closed-loop missions, configuration, Monte-Carlo rollouts and export.

pub mod config;
pub mod export;
pub mod mission;
pub mod rng;
pub mod scenario;

pub use config::{Method, ScenarioConfig};
pub use mission::{monte_carlo, run_mission, run_mission_partial, MonteCarloSummary, RunLog, StepRecord, SummaryStats};
pub use scenario::Scenario;
