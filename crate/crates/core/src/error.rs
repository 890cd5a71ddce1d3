use thiserror::Error;

/// Errors produced by the solvers, schedules and inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("non-finite value produced by {what} at {at}")]
    NonFinite { what: &'static str, at: String },

    #[error("unknown case id `{0}`")]
    UnknownCase(String),

    #[error("infeasible partition: {0}")]
    Infeasible(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn non_finite(what: &'static str, at: impl Into<String>) -> Self {
        Error::NonFinite {
            what,
            at: at.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Returns `value` if finite, otherwise a [`Error::NonFinite`] naming the source.
#[inline]
pub(crate) fn finite(value: f64, what: &'static str, at: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::non_finite(what, at()))
    }
}
