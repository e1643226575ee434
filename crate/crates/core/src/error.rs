use thiserror::Error;

/// Errors raised by the engine.
///
/// Numeric values are carried as `f64` regardless of the scalar type the
/// computation ran in.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid trial configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("correlation matrix is not positive semi-definite (residual variance {residual:.3e})")]
    NotPositiveSemiDefinite { residual: f64 },

    #[error("target accuracy {target:.3e} not reached within {points} points (estimate {value:.6}, error {err_est:.3e})")]
    AccuracyNotReached {
        value: f64,
        err_est: f64,
        target: f64,
        points: u64,
    },

    #[error("root not bracketed on [{lo}, {hi}]")]
    Bracketing { lo: f64, hi: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("{m} comparisons exceed the closure lattice limit of {max}")]
    TooManyComparisons { m: usize, max: usize },

    #[error("no critical value for subset {0:?}")]
    MissingSubset(Vec<usize>),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::AccuracyNotReached { .. }
                | Error::Bracketing { .. }
                | Error::NonConvergence(_)
                | Error::NotPositiveSemiDefinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
