use thiserror::Error;

/// Errors produced by the spectral engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular to tolerance (smallest singular value {sigma_min:e})")]
    SingularMatrix { sigma_min: f64 },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    /// Adaptive quadrature hit its point cap, usually because the integrand
    /// has a pole close to the real torus.
    #[error(
        "quadrature did not converge with {points} points per axis \
         (relative change {change:e}, smallest singular value seen {min_sigma:?})"
    )]
    NonConvergence {
        points: usize,
        change: f64,
        min_sigma: Option<f64>,
    },

    #[error("codimension {codim} out of range 1..={dim}")]
    CodimOutOfRange { codim: usize, dim: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("truncated operator dimension {dim} exceeds cap {cap}; use a smaller box")]
    TooLarge { dim: usize, cap: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
