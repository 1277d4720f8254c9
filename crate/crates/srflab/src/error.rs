//! Error type shared by all modules.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid evaluator: {0}")]
    InvalidEvaluator(String),
    #[error("time {t} outside horizon ({lo}, {hi})")]
    OutOfHorizon { t: f64, lo: f64, hi: f64 },
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("bad interval: required s < t, got s = {s}, t = {t}")]
    BadInterval { s: f64, t: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("unbalanced input: total masses differ by {0}")]
    UnbalancedInput(f64),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
}
