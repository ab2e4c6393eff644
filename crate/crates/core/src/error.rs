use thiserror::Error;

/// Errors raised by the workbench.
#[derive(Debug, Error)]
pub enum PislabError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("point ({x}, {t}) lies outside [0, 1] x [0, {t_max}]")]
    OutOfDomain { x: f64, t: f64, t_max: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("infeasible constraint: {reason} (residual {residual:.3e})")]
    Infeasible { reason: String, residual: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PislabError>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(PislabError::DimensionMismatch { expected, actual })
    }
}
