use thiserror::Error;

use crate::composition::ValidationReport;
use crate::kinematics::IkResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid composition: {0}")]
    Validation(ValidationReport),

    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{which} angle {angle_deg}° outside the allowed range [{min_deg}°, {max_deg}°]")]
    OutOfRange {
        which: &'static str,
        angle_deg: f64,
        min_deg: f64,
        max_deg: f64,
    },

    #[error("row {row} cannot be realized by a modular unit: {reason}")]
    Unconvertible { row: usize, reason: String },

    #[error(
        "inverse kinematics did not converge (position error {:.3e} m, rotation error {:.3e} rad)",
        .0.pos_err_m,
        .0.rot_err_rad
    )]
    NotConverged(Box<IkResult>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI and the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::Unconvertible { .. } => "Unconvertible",
            Error::NotConverged(_) => "NotConverged",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
