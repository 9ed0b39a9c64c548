use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("numerical failure in {context}: {detail}{}", .condition.map(|c| format!(" (condition estimate {c:.3e})")).unwrap_or_default())]
    Numerical { context: &'static str, detail: String, condition: Option<f64> },

    #[error("picard iteration diverged at iteration {iteration}: defect {defect:.3e} exceeds limit {limit:.3e}")]
    Divergence { iteration: usize, defect: f64, limit: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { context, expected, got }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
