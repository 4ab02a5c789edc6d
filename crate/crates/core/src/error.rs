use alloc::string::String;
use core::fmt;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the operation's domain.
    Domain(&'static str),
    /// A distribution or parameter set failed validation.
    InvalidParams(String),
    /// The queue (or the requested policy) is not stable.
    Stability(String),
    /// The combination of laws or statistic is not covered.
    Unsupported(&'static str),
    /// Adaptive quadrature did not reach its tolerance.
    Quadrature { value: f64, error: f64, intervals: usize },
    /// An integrand returned a non-finite value.
    NonFinite { at: f64 },
    /// Simulated backlog exceeded the runaway guard.
    Runaway { in_system: usize },
    /// Arrival/departure sequences violate the ordering rules.
    MalformedTrace(&'static str),
    /// Observation kind does not match the detector statistic.
    ObservationMismatch,
    /// A log-likelihood ratio was NaN or infinite.
    NonFiniteLlr,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(what) => write!(f, "domain error: {what}"),
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::Stability(msg) => write!(f, "stability violation: {msg}"),
            Error::Unsupported(what) => write!(f, "unsupported combination: {what}"),
            Error::Quadrature { value, error, intervals } => write!(
                f,
                "quadrature did not converge: value {value:e}, error estimate {error:e} after {intervals} intervals"
            ),
            Error::NonFinite { at } => write!(f, "integrand not finite at {at:e}"),
            Error::Runaway { in_system } => {
                write!(f, "runaway backlog: {in_system} jobs in system")
            }
            Error::MalformedTrace(what) => write!(f, "malformed trace: {what}"),
            Error::ObservationMismatch => f.write_str("observations do not match the statistic"),
            Error::NonFiniteLlr => f.write_str("log-likelihood ratio is not finite"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
