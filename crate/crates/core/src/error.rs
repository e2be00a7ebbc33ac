use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("filter diverged at observation {index}: {reason}")]
    FilterDiverged { index: usize, reason: String },
    #[error("simulation failed at step {index}: {reason}")]
    Simulation { index: usize, reason: String },
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("precision error: {0}")]
    Precision(String),
    #[error("singular regression: collinear covariates {0:?}")]
    Singular(Vec<String>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
