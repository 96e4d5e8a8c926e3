use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: last estimate {last:e}, previous {previous:e}")]
    Quadrature { last: f64, previous: f64 },

    #[error("profile has no turbulence, {0} is undefined")]
    ZeroTurbulence(&'static str),

    #[error("lag {lag:.3} px lies beyond the tabulated range of {max:.3} px")]
    OutOfRange { lag: f64, max: f64 },

    #[error("spectral synthesis clamped {fraction:.4} of the total power")]
    SpectralValidity { fraction: f64 },

    #[error("grid sampling {sampling:e} cycles/m cannot represent cutoff {cutoff:e} cycles/m")]
    Aliasing { sampling: f64, cutoff: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("gaussian fit failed: {0}")]
    FitFailure(String),

    #[error("spectrum is degenerate (all frames are zero)")]
    DegenerateSpectrum,

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => ErrorClass::Usage,
            Error::Format { .. }
            | Error::Io(_)
            | Error::InsufficientData(_)
            | Error::DegenerateSpectrum
            | Error::OutOfRange { .. } => ErrorClass::Data,
            Error::Quadrature { .. }
            | Error::ZeroTurbulence(_)
            | Error::SpectralValidity { .. }
            | Error::Aliasing { .. }
            | Error::FitFailure(_) => ErrorClass::Numerical,
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
