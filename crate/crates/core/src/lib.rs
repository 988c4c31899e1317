//! Turnpike analysis for linear-quadratic optimal control.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix the scalar for the common cases.

// `!(x <= tol)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod families;
pub mod horizon;
pub mod linalg;
pub mod metrics;
pub mod riccati;
pub mod scalar;
pub mod schur;
pub mod serde_util;
pub mod steady;
pub mod subspace;
pub mod system;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SystemSpecF64 = system::SystemSpec<f64>;
pub type SystemSpecF32 = system::SystemSpec<f32>;
pub type PdeSpecF64 = system::PdeSpec<f64>;
pub type PdeSpecF32 = system::PdeSpec<f32>;
pub type GridSpecF64 = system::GridSpec<f64>;
pub type GridSpecF32 = system::GridSpec<f32>;
pub type TrajectoryF64 = horizon::Trajectory<f64>;
pub type TrajectoryF32 = horizon::Trajectory<f32>;
pub type RiccatiResultF64 = riccati::RiccatiResult<f64>;
pub type RiccatiResultF32 = riccati::RiccatiResult<f32>;
pub type SteadySolutionF64 = steady::SteadySolution<f64>;
pub type SteadySolutionF32 = steady::SteadySolution<f32>;
pub type SubspaceReportF64 = subspace::SubspaceReport<f64>;
pub type SubspaceReportF32 = subspace::SubspaceReport<f32>;
