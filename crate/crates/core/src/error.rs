use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("duplicate index {0} in subset")]
    DuplicateIndex(usize),

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    /// A kernel submatrix `L_Y` stayed singular after the jitter retry.
    #[error("kernel submatrix of subset #{subset} is singular")]
    SingularSubmatrix { subset: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),

    /// A learning step could not keep a factor positive definite, even after
    /// repeatedly halving the step size.
    #[error(
        "positive definiteness lost at iteration {iteration} while updating {factor} \
         (min eigenvalue {min_eigenvalue:e})"
    )]
    PdViolation {
        iteration: usize,
        factor: &'static str,
        min_eigenvalue: f64,
    },

    #[error("subset #{subset} has {size} items, not below the union bound z = {z}")]
    Infeasible { subset: usize, size: usize, z: usize },

    #[error("ground set of {size} items exceeds the enumeration cap of {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
