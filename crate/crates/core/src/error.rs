//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for {what} (allowed {allowed})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        allowed: String,
    },

    #[error("overflow evaluating {0} in linear space; use the log-space variant")]
    Overflow(&'static str),

    #[error("pole of the gamma function at {0}")]
    Pole(String),

    #[error(
        "{what} did not converge within {terms} terms (partial sum {partial_sum:e}, last term {last_term:e})"
    )]
    NonConvergence {
        what: &'static str,
        terms: usize,
        partial_sum: f64,
        last_term: f64,
    },

    #[error("quadrature exceeded the maximum depth (best estimate {estimate:e}, error bound {error_bound:e})")]
    QuadratureDepth { estimate: f64, error_bound: f64 },

    #[error("divergent parameter regime: {0}")]
    Divergent(String),

    #[error("limit condition not met: {condition} ({detail})")]
    ConditionNotMet {
        condition: &'static str,
        detail: String,
    },

    #[error("size guard: {what} requires n <= {limit}, got {n} ({count} outcomes)")]
    Guard {
        what: &'static str,
        n: usize,
        limit: usize,
        count: u128,
    },

    #[error("cycle type has {norm} cycles; exact evaluation is capped at {cap}, use the Monte Carlo estimator instead")]
    TooManyCycles { norm: usize, cap: usize },

    #[error("window too short: {0}")]
    WindowTooShort(String),
}

impl Error {
    /// True for failures caused by a cardinality or size guard.
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Error::Guard { .. } | Error::TooManyCycles { .. } | Error::WindowTooShort(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
