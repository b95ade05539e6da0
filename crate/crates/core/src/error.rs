use thiserror::Error;

/// Errors raised by the estimators, kernels and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing entries present; the empirical joint estimator needs fully observed rows")]
    MissingEntries,

    #[error("no complete rows")]
    NoCompleteRows,

    #[error("column {0} fully missing")]
    ColumnMissing(usize),

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(u: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {u} is outside [0, 1]")))
    }
}
