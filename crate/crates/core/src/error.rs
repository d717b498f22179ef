use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Caller passed arguments that violate an operation's contract.
    Usage,
    /// Input files or bundles are malformed or inconsistent.
    Data,
    /// A numeric quantity became non-finite or a numeric check failed.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("unsupported format version {found} in {path} (supported: {supported})")]
    Version {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("manifest error in {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },

    #[error("array `{name}` disagrees with manifest: {msg}")]
    ArrayShape { name: String, msg: String },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("infeasible synthetic config: {0}")]
    Infeasible(String),

    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("calibration sweep not monotone at grid point {index}: {msg}")]
    NotMonotone { index: usize, msg: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Contract(_) | Error::Shape { .. } => ErrorClass::Usage,
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::Version { .. }
            | Error::Manifest { .. }
            | Error::ArrayShape { .. }
            | Error::Split(_)
            | Error::Infeasible(_) => ErrorClass::Data,
            Error::NonFinite(_)
            | Error::NonFiniteGradient(_)
            | Error::GradCheck(_)
            | Error::NotMonotone { .. } => ErrorClass::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
