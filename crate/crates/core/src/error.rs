use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoexError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("probability `{field}` = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { field: &'static str, value: f64 },

    #[error("station index {index} out of range for {n} stations")]
    StationIndex { index: usize, n: usize },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations: {reason}")]
    NoConvergence { iterations: usize, reason: String },
}

impl CoexError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        CoexError::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoexError>;

pub(crate) fn check_probability(field: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(CoexError::ProbabilityOutOfRange { field, value })
    }
}
