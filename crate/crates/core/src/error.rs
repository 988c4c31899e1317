use thiserror::Error;

/// Failures raised by the solvers and analysis routines.
///
/// Negative turnpike outcomes are not errors; they are reported as data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),

    #[error("{what} failed to converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("{what} is ill-conditioned (condition number {condition:e})")]
    Conditioning { what: &'static str, condition: f64 },

    #[error("integration blow-up at t = {time}: state norm {norm:e} exceeds guard (dominant mode {mode})")]
    BlowUp { time: f64, norm: f64, mode: usize },

    #[error("exponential fit undefined: {0}")]
    FitUndefined(String),

    #[error("input is not a solution of the linear system: defect {defect:e}")]
    NotASolution { defect: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
