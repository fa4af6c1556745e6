use std::fmt;

use thiserror::Error;

/// A single violated parameter invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidParameter {
    pub field: String,
    pub reason: String,
}

impl InvalidParameter {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for InvalidParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

fn join(violations: &[InvalidParameter]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    Invalid(Vec<InvalidParameter>),

    #[error("matrix exponential failed: {0}")]
    PropagatorFailure(String),

    #[error("reconstructed field is not real: imaginary residue {residue:e} exceeds {tolerance:e}")]
    RealnessViolation { residue: f64, tolerance: f64 },

    #[error("open-loop horizon too long for extension factor {factor}: front reaches {reach:.3} m, limit {limit:.3} m")]
    HorizonTooLong { factor: usize, reach: f64, limit: f64 },

    #[error("output grid does not align with the particle time step: {0}")]
    GridMismatch(String),

    #[error("time grid alignment: {0}")]
    GridAlignment(String),

    #[error("receiver lies upstream of the transmitter (distance {0} m)")]
    UpstreamUnsupported(f64),

    #[error("no equilibrium exists without damping")]
    NoEquilibrium,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid(vec![InvalidParameter::new(field, reason)])
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::GridMismatch(_)
                | Error::GridAlignment(_)
                | Error::UpstreamUnsupported(_)
                | Error::NoEquilibrium
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
