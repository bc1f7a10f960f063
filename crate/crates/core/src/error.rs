use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("undefined mean: resultant vector is zero")]
    UndefinedMean,

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error("insufficient orientations: got {got}, need at least {need}")]
    InsufficientOrientations { got: usize, need: usize },

    #[error("optimizer did not converge after {iterations} iterations (rms residual {rms:.3e})")]
    NoConvergence { iterations: usize, rms: f64 },

    #[error("calibration out of bounds: {0}")]
    CalibrationBounds(String),

    #[error("no stationary window found")]
    NoStationaryWindow,

    #[error("tilt unavailable: accelerometer norm {0:.3} m/s^2 too far from gravity")]
    TiltUnavailable(f64),

    #[error("heading undefined: horizontal magnetic field is zero")]
    HeadingUndefined,

    #[error("sampling rate {fs} Hz too low for {cutoff} Hz cutoff")]
    RateTooLow { fs: f64, cutoff: f64 },

    #[error("overlapping stride spans at index {0}")]
    OverlappingSpans(usize),

    #[error("degenerate test: differences have zero mean and zero variance")]
    Degenerate,

    #[error("unknown heading method {0:?} (supported: mag, gyro, complementary, madgwick)")]
    UnknownMethod(String),
}

impl Error {
    /// Process exit code for the CLI: 3 for numerical failures, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoConvergence { .. } | Error::UndefinedMean | Error::Degenerate => 3,
            _ => 2,
        }
    }
}
