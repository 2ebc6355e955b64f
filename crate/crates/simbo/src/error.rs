use thiserror::Error;

/// Errors surfaced by problem construction, identification and synthesis.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid eigenvalue bounds: lambda_min = {lambda_min}, lambda_max = {lambda_max}")]
    InvalidBounds { lambda_min: f64, lambda_max: f64 },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("a switching signal has no single time-invariant internal model")]
    SwitchHasNoModel,

    #[error("forgetting factor must lie in (0, 1), got {0}")]
    InvalidForgettingFactor(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not enough samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("controller synthesis infeasible over [{lambda_min}, {lambda_max}]")]
    Infeasible { lambda_min: f64, lambda_max: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
