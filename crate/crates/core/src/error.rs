use core::fmt;

/// Errors reported by model construction and numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidArgument {
        name: &'static str,
        reason: &'static str,
    },
    /// A numerical run became unstable. Carries the time and step size so the
    /// caller can pick a smaller `dt`.
    Unstable { time: f64, dt: f64, max_abs_sz: f64 },
    /// An iterative search or fit failed to produce a usable answer.
    NoConvergence { what: &'static str },
    /// No drive amplitude brought the central packet past the equator.
    /// Carries the best candidate found.
    CalibrationFailed { best_amplitude: f64, best_sz: f64 },
    /// The configuration is inconsistent (e.g. overlapping echo windows).
    Config(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidArgument { name, reason }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument { name, reason } => write!(f, "invalid `{name}`: {reason}"),
            Error::Unstable {
                time,
                dt,
                max_abs_sz,
            } => write!(
                f,
                "integration unstable at t = {time:.3e} s (|s_z| = {max_abs_sz:.6}); \
                 reduce the step size below dt = {dt:.3e} s"
            ),
            Error::NoConvergence { what } => write!(f, "{what} did not converge"),
            Error::CalibrationFailed {
                best_amplitude,
                best_sz,
            } => write!(
                f,
                "pulse calibration failed: best amplitude {best_amplitude:.4e} reached s_z = {best_sz:.4}"
            ),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
