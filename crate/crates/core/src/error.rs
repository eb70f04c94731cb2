use thiserror::Error;

/// Errors produced by graph construction, evolution and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected after removing node {0}")]
    Disconnected(usize),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant violated at step {step} (t = {time}): {quantity} = {magnitude:e}")]
    InvariantViolation {
        step: usize,
        time: f64,
        quantity: &'static str,
        magnitude: f64,
    },

    #[error("non-finite entry in density matrix at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("steady state not reached by t = {t_max}: residual {residual:e}")]
    NotConverged { t_max: f64, residual: f64 },

    #[error("vanishing denominator in steady-state constraint at node {0}")]
    VanishingDenominator(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
