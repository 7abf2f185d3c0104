use std::path::PathBuf;

use ndsig::EngineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NptError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("missing input: {}", .0.display())]
    Missing(PathBuf),
    #[error("malformed file {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("io error on {}: {source}", path.display())]
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

impl NptError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NptError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        NptError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures caused by non-finite values or diverging
    /// optimisation rather than bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            NptError::Numeric(_) | NptError::Engine(EngineError::NonFinite(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, NptError>;
