use thiserror::Error;

use crate::wed::WedSolution;

/// Errors raised by the solvers and checkers in this crate.
#[derive(Debug, Error)]
pub enum WedError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A point left the effective domain of an energy, or a sampled field was
    /// outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("not available: {0}")]
    NotAvailable(String),

    /// An iterative solver hit its iteration cap. `trace` holds the per-iteration
    /// convergence measure; `best` the best iterate when the solver produces one.
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: String,
        iterations: usize,
        trace: Vec<f64>,
        best: Option<Box<WedSolution>>,
    },

    #[error("numeric error: {msg}")]
    Numeric { msg: String, trace: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, WedError>;

pub(crate) fn invalid(msg: impl Into<String>) -> WedError {
    WedError::InvalidInput(msg.into())
}
