use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A constructor rejected a value; `field` names the offending input.
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("denominator of {what} vanishes")]
    ZeroDenominator { what: &'static str },

    #[error("path {path} exceeded the cap of {cap} events")]
    EventCapExceeded { path: u64, cap: u64 },

    #[error("fixed point and grid fallback both failed at p = {p}")]
    FallbackExhausted { p: f64 },

    #[error("policy table has M = {found}, model expects M = {expected}")]
    PolicyMismatch { expected: usize, found: usize },

    #[error("row p = {p}: {source}")]
    Row { p: f64, source: Box<Error> },

    #[error("policy table: {0}")]
    PolicyFormat(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }
}
