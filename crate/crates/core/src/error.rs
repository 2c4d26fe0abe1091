//! Error type shared by all modules.

use thiserror::Error;

/// Everything that can go wrong while building or solving a problem.
#[derive(Debug, Error)]
pub enum Error {
    /// A standing hypothesis on the model data is violated. `hypothesis` names
    /// the failed condition (e.g. `"exponent compatibility"`), `detail` says
    /// what was seen.
    #[error("hypothesis violated ({hypothesis}): {detail}")]
    Hypothesis { hypothesis: String, detail: String },

    /// Malformed grid or field dimensions.
    #[error("invalid grid: {0}")]
    Grid(String),

    /// Invalid density data (negative entries, zero mass, wrong length).
    #[error("invalid density: {0}")]
    Density(String),

    /// A scalar root solve was called with a bracket that does not straddle a
    /// sign change, or failed to converge.
    #[error("scalar solve failed: {0}")]
    ScalarSolve(String),

    /// An iterative estimate (e.g. the operator-norm power iteration) did not
    /// converge within its iteration budget.
    #[error("iteration budget exhausted: {0}")]
    NoConvergence(String),

    /// Solver configuration rejected at startup.
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

impl Error {
    /// Shorthand used by the hypothesis checks.
    pub fn hypothesis(name: &str, detail: impl Into<String>) -> Self {
        Error::Hypothesis {
            hypothesis: name.to_string(),
            detail: detail.into(),
        }
    }
}
