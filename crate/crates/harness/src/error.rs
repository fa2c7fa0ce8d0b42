use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] omd_curl::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            HarnessError::Config { field, message } => serde_json::json!({
                "error": "config",
                "field": field,
                "message": message,
            }),
            HarnessError::Io { path, source } => serde_json::json!({
                "error": "io",
                "path": path.display().to_string(),
                "message": source.to_string(),
            }),
            HarnessError::Parse { path, message } => serde_json::json!({
                "error": "parse",
                "path": path.display().to_string(),
                "message": message,
            }),
            HarnessError::Core(e) => serde_json::json!({
                "error": "run",
                "message": e.to_string(),
            }),
        }
    }
}
