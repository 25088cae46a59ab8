//! Directed-information-regularized attention allocation for LQG path
//! following with landmark bearings.
//!
//! The crate is organized bottom-up: [`symkernel`] provides symmetric and SPD
//! matrix primitives, [`plant`] the unicycle model, [`lqg`] and [`filter`]
//! the control and estimation halves, [`subsolver`] an interior-point engine,
//! [`allocator`] the convex-concave allocation loop with its distributed
//! [`admm`] variant, [`baselines`] the comparison policies and closed forms,
//! and [`harness`] the closed-loop missions and exports.

pub mod admm;
pub mod allocator;
pub mod baselines;
pub mod error;
pub mod filter;
pub mod harness;
pub mod lqg;
pub mod plant;
pub mod subsolver;
pub mod symkernel;

pub use error::{Error, Result};
pub use filter::{AttentionVector, Belief};
pub use plant::{ControlInput, Landmark, LtvWindow, ReferenceTrajectory, RobotState};
pub use symkernel::{SpdMatrix, SymMatrix};
