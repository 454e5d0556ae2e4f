use thiserror::Error;

/// Failures raised by the numerical kernels.
///
/// Variants split into two families: invalid inputs (caller bugs, rejected at
/// construction) and numerical signals (a solver or sampler hit a condition
/// that should not happen for valid fGn inputs).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("Toeplitz system ill-conditioned: prediction-error variance {variance:e} at order {order}")]
    IllConditioned { order: usize, variance: f64 },

    #[error("Neumann series not contractive: spectral radius of I - cT is {radius}")]
    NotContractive { radius: f64 },

    #[error("Neumann series did not reach tolerance within {terms} terms")]
    MaxTermsExceeded { terms: usize },

    #[error("eigenvalue iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Cholesky pivot {pivot:e} at row {row} is not positive")]
    CholeskyFailure { row: usize, pivot: f64 },

    #[error("circulant embedding not positive semidefinite: eigenvalue {eigenvalue:e} at index {index}")]
    EmbeddingNotPsd { index: usize, eigenvalue: f64 },

    #[error("conditional variance did not stabilize before k = {k_cap}")]
    NoStabilization { k_cap: usize },

    #[error("no d_n measurements available for n = {n}")]
    MissingDn { n: u64 },
}

impl Error {
    /// True for the signals that indicate a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::NotContractive { .. }
                | Error::MaxTermsExceeded { .. }
                | Error::NoConvergence { .. }
                | Error::CholeskyFailure { .. }
                | Error::EmbeddingNotPsd { .. }
                | Error::NoStabilization { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
