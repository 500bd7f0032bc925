use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unstable dynamics: spectral radius {0} >= 1")]
    Unstable(f64),

    #[error("chain {chain} diverged at iteration {iteration}")]
    Diverged { chain: usize, iteration: usize },

    #[error("{unmet} of {total} coupled pairs did not meet before the cap")]
    Unmet { unmet: usize, total: usize },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
