use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AcedError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AcedError {
    /// A model parameter lies outside its mathematical domain.
    #[error("parameter domain error: {0}")]
    Domain(String),

    /// Inputs to an operation are malformed or inconsistent.
    #[error("input error: {0}")]
    Input(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("data error in {}{}: {message}", path.display(), row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Data {
        path: PathBuf,
        row: Option<usize>,
        message: String,
    },

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AcedError {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        AcedError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, row: Option<usize>, message: impl Into<String>) -> Self {
        AcedError::Data {
            path: path.into(),
            row,
            message: message.into(),
        }
    }
}
