use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: String, found: String },

    #[error("{0} must be square")]
    NotSquare(&'static str),

    #[error("{0} contains non-finite entries")]
    NonFinite(&'static str),

    #[error("{what} is not symmetric (asymmetry {asymmetry:e} exceeds tolerance {tolerance:e})")]
    NotSymmetric { what: &'static str, asymmetry: f64, tolerance: f64 },

    /// Smallest eigenvalue at or below the positivity floor.
    #[error("{what} is singular or not positive definite (min eigenvalue {min_eigenvalue:e}, floor {floor:e})")]
    Singular { what: &'static str, min_eigenvalue: f64, floor: f64 },

    #[error("drift matrix is not Hurwitz (max eigenvalue real part {max_real_part:e})")]
    NotHurwitz { max_real_part: f64 },

    #[error("pair (A, B) is not controllable (controllability rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },

    #[error("step size h = {h} too large: covariance left the positive-definite cone; use a smaller step")]
    StepSize { h: f64 },

    #[error("structural assumption violated: {0}")]
    ModeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("reference oracle failed: {0}")]
    OracleFailure(String),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch { context, expected: expected.to_string(), found: found.to_string() }
    }

    /// True for errors caused by invalid inputs rather than by a numeric breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::NotSquare(_)
                | Error::NonFinite(_)
                | Error::NotSymmetric { .. }
                | Error::NotHurwitz { .. }
                | Error::Uncontrollable { .. }
                | Error::ModeMismatch(_)
                | Error::InvalidArgument(_)
        )
    }
}
