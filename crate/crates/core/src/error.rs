use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probabilities do not sum to 1 (sum = {0})")]
    NotNormalized(f64),

    #[error("negative or non-finite probability {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("row {row} of the encoder table sums to {sum}, expected 1")]
    RowNotStochastic { row: usize, sum: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid axis: {0}")]
    InvalidAxis(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure at iteration {iteration}: {detail}")]
    Numerical { iteration: usize, detail: String },

    #[error("non-finite value in loss term `{0}`")]
    NonFiniteLoss(String),

    #[error("loss must be a scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("model does not provide {0}")]
    Capability(&'static str),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
