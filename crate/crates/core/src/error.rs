use thiserror::Error;

pub type Result<T> = std::result::Result<T, TntError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TntError {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("incompatible legs: {0}")]
    IncompatibleLegs(String),
    #[error("leg occupied: {0}")]
    LegOccupied(String),
    #[error("label collision: {0}")]
    LabelCollision(String),
    #[error("incompatible nodes: {0}")]
    IncompatibleNodes(String),
    #[error("incompatible blocks: {0}")]
    IncompatibleBlocks(String),
    #[error("operator is not covariant: {0}")]
    NotCovariant(String),
    #[error("symmetry violation: {0}")]
    SymmetryViolation(String),
    #[error("unsupported symmetry: {0}")]
    UnsupportedSymmetry(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("leg not connected: {0}")]
    NotConnected(String),
    #[error("decomposition failed: {0}")]
    DecompositionFailed(String),
    #[error("eigensolver did not converge after {iterations} iterations (best residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> TntError {
    TntError::InvalidArgument(msg.into())
}
