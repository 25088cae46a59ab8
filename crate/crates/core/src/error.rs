use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("landmark {id} coincides with the robot position")]
    LandmarkCollision { id: usize },

    #[error("B'SB + R is not positive definite at step {step}")]
    SingularInnerMatrix { step: usize },

    #[error("Riccati fixed point diverges: |a| = {a_abs} >= 1 without measurements")]
    Diverges { a_abs: f64 },

    #[error("no strictly feasible starting point: {0}")]
    Infeasible(String),

    #[error("barrier solver hit the iteration limit ({iterations} Newton steps)")]
    MaxIterations { iterations: usize },

    #[error("barrier solver exceeded its {seconds} s time limit")]
    TimeLimit { seconds: f64 },

    #[error("subsolver failed at CCP iteration {iteration}: {source}")]
    SubsolverFailure {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ADMM X-update failed at window step {step}: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mission step {step}: {source}")]
    Mission {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True when the root cause is a solver failure rather than bad input or IO.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Mission { source, .. }
            | Error::StepFailure { source, .. } => source.is_solver_failure(),
            Error::SubsolverFailure { .. }
            | Error::Infeasible(_)
            | Error::MaxIterations { .. }
            | Error::TimeLimit { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::SingularInnerMatrix { .. }
            | Error::Diverges { .. } => true,
            _ => false,
        }
    }

    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Mission { source, .. } => source.is_config_error(),
            Error::Config(_) | Error::DimensionMismatch { .. } | Error::LandmarkCollision { .. } => {
                true
            }
            _ => false,
        }
    }

    pub fn is_io_error(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
