use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report. Variants are grouped by family so
/// the CLI can map each family onto its own exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid perturbation: |dq| = {norm} must be < 1")]
    InvalidPerturbation { norm: f64 },

    #[error("depth {depth} outside valid range [{min}, {max}]")]
    InvalidDepth { depth: f64, min: f64, max: f64 },

    #[error("projective jacobian is singular at point {point:?}")]
    SingularJacobian { point: [f64; 3] },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("under-constrained problem: {0}")]
    UnderConstrained(String),

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("no timestamp associations within {max_dt} s")]
    NoAssociation { max_dt: f64 },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("missing file {path} ({what})")]
    MissingFile { path: PathBuf, what: String },

    #[error("{path}: image is {actual_w}x{actual_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("invalid manifest {path}: {message}")]
    Manifest { path: String, message: String },

    #[error("raster decode failed: {0}")]
    Raster(String),

    #[error("trajectory validation failed: {0}")]
    Trajectory(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Coarse error family, stable across versions; used for exit codes.
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Config(_) | Error::InvalidPerturbation { .. } => ErrorFamily::Config,
            Error::UnderConstrained(_) => ErrorFamily::UnderConstrained,
            Error::InvalidDepth { .. }
            | Error::SingularJacobian { .. }
            | Error::DegenerateAlignment(_)
            | Error::NoAssociation { .. } => ErrorFamily::Numerical,
            Error::Parse { .. } | Error::Manifest { .. } | Error::Raster(_) | Error::Trajectory(_) => {
                ErrorFamily::Format
            }
            Error::MissingFile { .. } | Error::DimensionMismatch { .. } | Error::Io { .. } => ErrorFamily::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config,
    Io,
    Format,
    UnderConstrained,
    Numerical,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Config => 2,
            ErrorFamily::Io => 3,
            ErrorFamily::Format => 4,
            ErrorFamily::UnderConstrained => 5,
            ErrorFamily::Numerical => 6,
        }
    }
}
