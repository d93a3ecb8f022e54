//! Crate-wide error type.

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Coarse classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or API misuse.
    Config,
    /// Input data unusable or inconsistent (including convex-order failures).
    Data,
    /// Numerical failure (non-convergence, NaN, CFL violation).
    Numeric,
    /// A verification gate failed.
    Verification,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no usable input rows")]
    EmptyInput,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("numeric error at step {step}: {message}")]
    NumericAtStep { step: usize, message: String },
    #[error("calibration failed: {message} (best objective so far {best_objective:e})")]
    Calibration { message: String, best_objective: f64 },
    #[error("tail correction failed: {0}")]
    TailCorrection(String),
    #[error("invalid curve at grid index {index}: {message}")]
    InvalidCurve { index: usize, message: String },
    #[error("marginals are not in convex order: {0}")]
    ConvexOrder(String),
    #[error("pricing error at node {node}: {message}")]
    Pricing { node: usize, message: String },
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Usage(_) | Error::Config(_) => ErrorKind::Config,
            Error::Parse(_)
            | Error::EmptyInput
            | Error::InsufficientData(_)
            | Error::Domain(_)
            | Error::TailCorrection(_)
            | Error::InvalidCurve { .. }
            | Error::ConvexOrder(_)
            | Error::Pricing { .. } => ErrorKind::Data,
            Error::Numeric(_)
            | Error::NumericAtStep { .. }
            | Error::Calibration { .. }
            | Error::Simulation(_) => ErrorKind::Numeric,
            Error::Verification(_) => ErrorKind::Verification,
        }
    }
}
