//! Error type shared by the numerical routines.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Input matrix is not symmetric within tolerance.
    #[error("matrix is not symmetric: max |A - A^T| = {asym:e} exceeds {tol:e}")]
    NonSymmetric { asym: f64, tol: f64 },

    /// Input matrix has an eigenvalue below the negative-dust tolerance.
    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:e}")]
    IndefiniteInput { eigenvalue: f64 },

    /// Iterative decomposition did not converge.
    #[error("decomposition failed to converge")]
    ConvergenceFailure,

    /// Requested eigenvalue is too close to a neighbor for a stable derivative.
    #[error("eigenvalue {index} is degenerate: gap {gap:e} below {tol:e}")]
    DegenerateEigenvalue { index: usize, gap: f64, tol: f64 },

    /// Operand shapes are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Adaptive ridge system is numerically singular.
    #[error("ridge system is numerically singular (lambda = 0 with rank-deficient design?)")]
    SingularRidge,

    /// Arguments outside the domain of a bound or estimator.
    #[error("invalid inputs: {0}")]
    InvalidInputs(String),

    /// A metric denominator is zero.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// Non-finite value where a finite one is required.
    #[error("non-finite input: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
