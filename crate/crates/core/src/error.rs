use thiserror::Error;

use crate::datum::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("gaussian fixed point left the positive definite cone at iteration {iteration} (smallest eigenvalue {min_eigenvalue:e})")]
    OracleBreakdown { iteration: usize, min_eigenvalue: f64 },

    #[error("intertwining transformation {which} is singular at working precision")]
    SingularIntertwiner { which: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid datum: {0}")]
    InvalidDatum(ValidationReport),

    #[error("invalid theta: {0}")]
    InvalidTheta(String),

    #[error("invalid p = {0}: must lie in (0, 1]")]
    InvalidP(f64),

    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("directions are pairwise dependent (angle {angle})")]
    DegenerateDirections { angle: f64 },

    #[error("random feasible generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("flow did not converge (termination: {0})")]
    NotConverged(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
