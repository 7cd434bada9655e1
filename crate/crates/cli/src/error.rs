use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A configuration value failed validation; `path` is the dotted key.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("{0}")]
    Model(#[from] fblin_core::Error),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Maps a core validation error onto the config section it came from.
    pub fn in_section(section: &str, err: fblin_core::Error) -> Self {
        match err {
            fblin_core::Error::InvalidParameter { name, reason } => {
                CliError::config(format!("{section}.{name}"), reason)
            }
            other => CliError::Model(other),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Model(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    /// Machine-readable report printed on failure.
    pub fn report(&self) -> serde_json::Value {
        let body = match self {
            CliError::Config { path, message } => {
                json!({ "kind": "config", "path": path, "message": message })
            }
            CliError::Io { path, message } => {
                json!({ "kind": "io", "path": path, "message": message })
            }
            CliError::Model(e) => {
                let t = match e {
                    fblin_core::Error::AtTime { t, .. } => Some(*t),
                    fblin_core::Error::Diverged { t } => Some(*t),
                    _ => None,
                };
                json!({ "kind": "simulation", "message": e.to_string(), "cause": e.root().to_string(), "t": t })
            }
        };
        json!({ "error": body })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
