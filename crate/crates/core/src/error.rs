use crate::profile::Violation;
use crate::video::Colorspace;

/// Errors produced by the degradation pipeline and the estimator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("colorspace mismatch: expected {expected:?}, got {actual:?}")]
    ColorspaceMismatch {
        expected: Colorspace,
        actual: Colorspace,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid profile: {}", format_violations(.0))]
    InvalidProfile(Vec<Violation>),

    #[error("profile set is empty")]
    EmptyProfileSet,

    #[error("kernel {kernel}x{kernel} larger than {height}x{width} frame")]
    KernelLargerThanFrame {
        kernel: usize,
        height: usize,
        width: usize,
    },

    #[error("insufficient dynamic range: {0}")]
    InsufficientDynamicRange(String),

    #[error("insufficient texture: {0}")]
    InsufficientTexture(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse category used by callers that map errors to exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io(_) => ErrorCategory::Io,
            Error::ColorspaceMismatch { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidParameter(_)
            | Error::InvalidProfile(_)
            | Error::EmptyProfileSet
            | Error::KernelLargerThanFrame { .. }
            | Error::Parse { .. }
            | Error::Serialize(_) => ErrorCategory::Validation,
            Error::InsufficientDynamicRange(_) | Error::InsufficientTexture(_) => {
                ErrorCategory::Numerical
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Io,
    Validation,
    Numerical,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Io => "io",
            ErrorCategory::Validation => "validation",
            ErrorCategory::Numerical => "numerical",
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{}: {}", v.field, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
