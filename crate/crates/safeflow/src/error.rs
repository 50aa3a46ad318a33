use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SafeflowError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Validation(#[from] safeflow_core::Error),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SafeflowError> = std::result::Result<T, E>;
