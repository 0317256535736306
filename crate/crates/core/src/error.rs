use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("grid too short for decay fit: {0}")]
    InsufficientDecade(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("inertia not monotone in k: n_neg({k_prev}) = {n_prev} < n_neg({k}) = {n}")]
    MonotonicityViolation {
        k_prev: u32,
        n_prev: usize,
        k: u32,
        n: usize,
    },

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("time integration blew up at t = {t} (norm {norm:e})")]
    BlowUp { t: f64, norm: f64 },

    #[error("Arnoldi did not converge after {restarts} restarts (residual {residual:e})")]
    ArnoldiNotConverged { restarts: usize, residual: f64 },

    #[error("fixed-point iteration failed: {0}")]
    FixedPointFailed(String),

    #[error("config error(s): {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("artifact hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
