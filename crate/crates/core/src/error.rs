use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty vector or operator (dimension must be at least 1)")]
    Empty,

    #[error("non-finite value in {what} at component {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("operator is not symmetric positive definite: pivot {index} is {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate:e})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point outside the admissible region of problem `{0}`")]
    Inadmissible(String),

    #[error("constants too large for the convergence theorem: R numerator {numerator:e} is not positive")]
    HypothesesUnsatisfiable { numerator: f64 },

    #[error("coercivity check failed at t = {t}: gamma = {gamma:e} exceeds smallest eigenvalue {min_eig:e}")]
    CoercivityViolated { t: f64, gamma: f64, min_eig: f64 },

    #[error("no compliant configuration at this dimension/seed ({0})")]
    NoCompliantConfiguration(String),

    #[error("unknown problem label `{0}`")]
    UnknownProblem(String),

    #[error("{0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
