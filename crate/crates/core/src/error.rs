use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum AfemError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("refinement closure did not terminate within {0} steps")]
    ClosureFuel(usize),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("solver did not converge (relative residual {residual:e} > {tol:e})")]
    NotConverged { residual: f64, tol: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl AfemError {
    /// True for errors caused by bad caller input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            AfemError::InvalidInput(_) | AfemError::MeshMismatch(_) | AfemError::NonConforming(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, AfemError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AfemError::InvalidInput(msg.into()))
}
