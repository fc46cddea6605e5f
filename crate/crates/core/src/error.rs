use thiserror::Error;

/// Errors produced by scenario construction, the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("non-PSD quadratic form (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("bisection failed to bracket the power multiplier: {0}")]
    BracketFailure(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
