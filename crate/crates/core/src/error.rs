use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("arm {arm} out of range for {arms} arms")]
    InvalidArm { arm: usize, arms: usize },

    #[error("reward must be finite, got {0}")]
    NonFiniteReward(f64),

    #[error("action does not fit the attribute schema: {0}")]
    InvalidAction(String),

    #[error("catalog row {row}: {message}")]
    CatalogRow { row: usize, message: String },

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("timestamp {0} is outside the delivery window")]
    OutOfWindow(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate sample: {0}")]
    Degenerate(&'static str),

    #[error("enumeration guard exceeded: {arms}^{horizon} sequences > {limit}")]
    GuardExceeded { arms: usize, horizon: usize, limit: u64 },

    #[error("config: {0}")]
    Config(String),

    #[error("unknown parameter path `{0}`")]
    UnknownParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InvalidArm { .. } => "invalid-arm",
            Error::NonFiniteReward(_) => "non-finite-reward",
            Error::InvalidAction(_) => "invalid-action",
            Error::CatalogRow { .. } | Error::Catalog(_) => "catalog",
            Error::OutOfWindow(_) => "out-of-window",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::Empty(_) => "empty-input",
            Error::Degenerate(_) => "degenerate",
            Error::GuardExceeded { .. } => "guard-exceeded",
            Error::Config(_) => "config",
            Error::UnknownParameter(_) => "unknown-parameter",
            Error::Unsupported(_) => "unsupported",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
