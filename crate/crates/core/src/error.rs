use thiserror::Error;

/// Errors raised by graph construction, the solvers and the pipelines.
#[derive(Debug, Error)]
pub enum CdsError {
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("vertex {index} out of range for a graph with {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },

    #[error("duplicate vertex {0} in constraint set")]
    DuplicateVertex(usize),

    #[error("matrix is not symmetric: max defect {0:e}")]
    NotSymmetric(f64),

    #[error("negative weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },

    #[error("nonzero diagonal {value} at index {index}")]
    NonZeroDiagonal { index: usize, value: f64 },

    #[error("set of size {size} exceeds the exhaustive limit of {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("membership violation: {0}")]
    Membership(String),

    #[error("vertex set is not a dominant set")]
    NotDominant,

    #[error("non-binary entry {value} at ({row}, {col})")]
    NonBinary { row: usize, col: usize, value: f64 },

    #[error("vector is not on the simplex: {0}")]
    NotOnSimplex(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-finite gradient for entry ({row}, {col})")]
    NonFiniteGradient { row: usize, col: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CdsError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> CdsError {
    CdsError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
