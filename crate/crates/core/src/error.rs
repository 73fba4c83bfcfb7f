use thiserror::Error;

/// Errors produced by the identification library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("input asymmetry {found:e} exceeds threshold {threshold:e}")]
    Asymmetric { found: f64, threshold: f64 },

    #[error("eigensolver did not converge")]
    EigenSolverFailure,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("basis size {requested} exceeds the real dimension {max} of the Hermitian space")]
    BasisTooLarge { requested: usize, max: usize },

    #[error("could not draw a well-conditioned basis after {0} attempts")]
    IllConditionedBasis(usize),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite field sample at step {0}")]
    NonFiniteField(usize),

    #[error("field grid does not match the trajectory or problem grid")]
    GridMismatch,

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("objective decreased by {drop:e} at iteration {iteration}")]
    MonotonicityViolation { iteration: usize, drop: f64 },

    #[error("reference operator is zero")]
    ZeroReference,

    #[error("{measurements} measurements supplied for {fields} fields")]
    CountMismatch { measurements: usize, fields: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
