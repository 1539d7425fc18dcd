//! Crate-wide error type.

/// Errors produced by any ratekit module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A precondition on an argument failed (empty dataset, bad range, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A value is outside the mathematical domain of an operation
    /// (zero-norm vector in a cosine, response outside family support, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A text artifact could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// IRLS ran out of iterations. Carries the last coefficient vector so the
    /// caller can inspect where the fit was heading.
    #[error("fit did not converge after {iterations} iterations (last deviance {deviance:e})")]
    NonConvergence {
        iterations: usize,
        deviance: f64,
        coefficients: Vec<f64>,
    },

    /// A linear system was singular to working precision.
    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    /// The fit diverged (e.g. a separated binomial response pushing
    /// coefficients to infinity). Carries the last coefficient vector.
    #[error("fit diverged: {message}")]
    Divergence { message: String, coefficients: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, message: msg.into() }
    }
}
