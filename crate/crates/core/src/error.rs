use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    /// λ₊ = λ₋; the eigenvector expansion does not exist and the confluent
    /// solution must be used instead.
    #[error("degenerate eigensystem: 4κ² = ω² (κ = {kappa}, ω = {omega})")]
    DegenerateEigensystem { kappa: f64, omega: f64 },

    #[error(
        "step too large at step {step}: |r| = {norm} after an Euler-Maruyama step; reduce dt"
    )]
    StepTooLarge { step: usize, norm: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn params(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::StepTooLarge { .. } => true,
            Error::Trajectory { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
