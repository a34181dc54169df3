use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integer overflow: {0}")]
    Overflow(String),
    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },
    #[error("out of range: {0}")]
    Range(String),
    #[error("dimension {size} exceeds dense limit {limit}")]
    DenseLimit { size: usize, limit: usize },
    #[error("Gram-Schmidt residual norm {norm:e} below rank threshold at column {column}")]
    NumericalRank { column: usize, norm: f64 },
    #[error("tridiagonal pivot {pivot:e} at row {row}")]
    SingularSolve { row: usize, pivot: f64 },
    #[error("state vector is zero")]
    ZeroState,
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("hypothesis window: {0}")]
    HypothesisWindow(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Errors caused by size or range limits rather than by bad input or failed checks.
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, Error::DenseLimit { .. } | Error::Overflow(_))
    }
}
