use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {intervals} intervals")]
    Quadrature {
        estimate: f64,
        error: f64,
        intervals: usize,
    },

    /// A root could not be bracketed in the allowed search range.
    #[error("no bracket for root in [{lo:e}, {hi:e}]")]
    NoBracket { lo: f64, hi: f64 },

    /// Iterative least squares hit its iteration budget.
    #[error("fit did not converge after {iterations} iterations")]
    FitNonConvergence { iterations: usize },

    /// Input data cannot constrain the requested model.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Not enough samples for the requested estimator.
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// The per-shot signal vanishes for every phase-accumulation time.
    #[error("target invisible: signal is zero for every accumulation time")]
    TargetInvisible,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad arguments rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::TooFewPoints { .. } | Error::Degenerate(_)
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
