use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("individual {0} has no objective value")]
    UnsetObjective(usize),

    #[error("surrogate unavailable: {0}")]
    SurrogateUnavailable(String),

    #[error("no feasible point found after {0} tries")]
    NoFeasiblePoint(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
