//! Error type shared by every module of the toolkit.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    /// Ids referenced somewhere (split, extreme set, query) that have no
    /// embedding row or no label.
    #[error("consistency error: {reason}: {}", .ids.join(","))]
    Consistency { reason: String, ids: Vec<String> },

    #[error("split error: {0}")]
    Split(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate gap: full-data rho {full} must exceed lower reference {lower}")]
    DegenerateGap { lower: f64, full: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("degenerate axis: {0}")]
    DegenerateAxis(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dim { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("all {trials} trials failed")]
    AllTrialsFailed { trials: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn consistency(reason: impl Into<String>, ids: Vec<String>) -> Self {
        Error::Consistency {
            reason: reason.into(),
            ids,
        }
    }

    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Format(_) => "FormatError",
            Error::UnsupportedLayout(_) => "UnsupportedLayout",
            Error::Shape(_) => "ShapeError",
            Error::Parse(_) => "ParseError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::Consistency { .. } => "ConsistencyError",
            Error::Split(_) => "SplitError",
            Error::Invariant(_) => "InvariantError",
            Error::InvalidValue(_) => "InvalidValue",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::DegenerateGap { .. } => "DegenerateGap",
            Error::SingularSystem(_) => "SingularSystem",
            Error::Diverged { .. } => "DivergedError",
            Error::DegenerateAxis(_) => "DegenerateAxis",
            Error::Dim { .. } => "DimError",
            Error::EmptyInput(_) => "EmptyInput",
            Error::Range(_) => "RangeError",
            Error::AllTrialsFailed { .. } => "AllTrialsFailed",
        }
    }

    /// True when the error is caused by the caller's inputs rather than by
    /// the environment or by an optimizer failing to converge.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Diverged { .. } | Error::AllTrialsFailed { .. }
        )
    }
}
