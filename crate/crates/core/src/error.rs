use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("grid is not connected: bus {0} unreachable from the generator bus")]
    Disconnected(u32),

    #[error("singular network matrix: {0}")]
    Singular(String),

    #[error("infeasible operating point: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::Schema(_) => "schema",
            Error::Disconnected(_) => "disconnected",
            Error::Singular(_) => "singular",
            Error::Infeasible(_) => "infeasible",
            Error::Config(_) => "config",
            Error::TrainingAborted(_) => "training_aborted",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
