use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors surfaced by samplers, fitters and the bias-correction solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented precondition.
    InvalidArgument(String),
    /// A computation could not be completed in finite precision.
    NumericFailure(String),
    /// A simulated mean was too large for the discrete quantile support
    /// cap; `index` is the offending observation.
    SimulationOverflow { index: usize },
    /// A discrete quantile search exceeded the hard support cap.
    SupportCapExceeded { cap: u64 },
    /// The initial estimator failed on the observed sample. The corrected
    /// estimator is undefined without it.
    InitialEstimatorFailure(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NumericFailure(msg) => write!(f, "numeric failure: {msg}"),
            Error::SimulationOverflow { index } => {
                write!(f, "simulated mean overflows count support at observation {index}")
            }
            Error::SupportCapExceeded { cap } => {
                write!(f, "discrete quantile exceeded the support cap of {cap}")
            }
            Error::InitialEstimatorFailure(msg) => {
                write!(f, "initial estimator failed on the observed sample: {msg}")
            }
        }
    }
}

impl core::error::Error for Error {}
