use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum FscreError {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("column {name} has zero robust scale (constant or near-constant)")]
    DegenerateColumn { index: usize, name: String },

    #[error("need at least two columns to predict cells, found {0}")]
    TooFewColumns(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("true active set is empty")]
    EmptyTruth,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FscreError {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        FscreError::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FscreError>;
