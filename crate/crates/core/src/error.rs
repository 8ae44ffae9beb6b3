use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of a constitutive map.
    Domain { what: &'static str, value: f64 },
    /// A parameter set violates one of its invariants.
    InvalidParameter { name: &'static str, reason: String },
    /// The requested cell resolution cannot resolve the circular exclusion.
    MeshTooCoarse { circle_nodes: usize },
    /// A linear system could not be solved.
    Singular { what: &'static str },
    /// An iterative method failed to converge.
    NoConvergence { what: &'static str, iterations: usize },
    /// The adaptive controller reduced the step below its floor.
    StepUnderflow { t: f64, dt: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { what, value } => write!(f, "{what}: argument {value} outside domain"),
            Error::InvalidParameter { name, reason } => write!(f, "invalid parameter `{name}`: {reason}"),
            Error::MeshTooCoarse { circle_nodes } => write!(
                f,
                "cell resolution too coarse: {circle_nodes} nodes on the exclusion boundary (need at least 16)"
            ),
            Error::Singular { what } => write!(f, "singular system in {what}"),
            Error::NoConvergence { what, iterations } => {
                write!(f, "{what} did not converge after {iterations} iterations")
            }
            Error::StepUnderflow { t, dt } => write!(f, "time step underflow at t = {t} s (dt = {dt} s)"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
