use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the evaluation engine.
///
/// Variants fall into three families that the command-line front end maps to
/// distinct exit codes: I/O, validation (bad inputs or arguments) and numeric
/// (degenerate data, non-convergence).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unsupported audio format: {field}: {message}")]
    Format { field: &'static str, message: String },

    #[error("no voiced frames above threshold")]
    EmptyVoiced,

    #[error("voiced length {0:.3} s is shorter than the 2 s minimum chunk")]
    TooShort(f64),

    #[error("unresolvable references: {}", .0.join(", "))]
    MissingRefs(Vec<String>),

    #[error("speaker {0} has no samples passing the enrollment filter")]
    MissingSpeaker(String),

    #[error("calibration and evaluation splits share speakers: {}", .0.join(", "))]
    SpeakerOverlap(Vec<String>),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("calibration did not converge; final gradient norm {grad_norm:e}")]
    NonConvergence { grad_norm: f64 },
}

/// Coarse failure category used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Degenerate(_) | Error::NonConvergence { .. } | Error::EmptyVoiced => ErrorKind::Numeric,
            _ => ErrorKind::Validation,
        }
    }

    /// Process exit code: 1 I/O, 2 validation, 3 numeric or degenerate data.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Io => 1,
            ErrorKind::Validation => 2,
            ErrorKind::Numeric => 3,
        }
    }
}
