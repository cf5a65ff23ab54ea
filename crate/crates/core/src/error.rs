use thiserror::Error;

/// Errors raised by the synthesis, integration and discretization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("metric kind {found} does not support {operation}")]
    WrongMetricKind {
        operation: &'static str,
        found: &'static str,
    },

    /// The rate constraint cannot be met because the control has no authority
    /// (`grad_v V = 0`) while the drift still raises `V` faster than allowed.
    #[error(
        "rate constraint infeasible at state: drift term {drift_term:e} does not exceed rate {rate:e} on the grad_v V = 0 set"
    )]
    Infeasible { drift_term: f64, rate: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
