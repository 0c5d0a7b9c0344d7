use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("grid of {size} points exceeds cap of {cap}")]
    GridTooLarge { size: u128, cap: u128 },

    #[error("no grid point satisfies the guardrails of group {group:?}; best margins {best_margins:?}")]
    Infeasible { group: Vec<usize>, best_margins: Vec<f64> },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("unsupported formula kind {0:?}")]
    UnsupportedVersion(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("dataset failed validation ({} violations, first: {})", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Data(Vec<crate::domain::Violation>),

    #[error("io error on {path}: {source}")]
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

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
