use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of the command-line layer, each with a process exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config: `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] contmeas_core::Error),
}

impl AppError {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        AppError::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Parameter errors found while checking a configuration.
    pub fn from_validation(e: contmeas_core::Error) -> Self {
        match e {
            contmeas_core::Error::InvalidParameter { name, reason } => AppError::Config {
                field: config_key(name).to_string(),
                reason: reason.to_string(),
            },
            other => AppError::Core(other),
        }
    }

    /// 2 for configuration problems, 3 for escape failures, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Parse(_) | AppError::Config { .. } => 2,
            AppError::Core(contmeas_core::Error::InvalidParameter { .. }) => 2,
            AppError::Core(contmeas_core::Error::EscapeFraction { .. }) => 3,
            _ => 4,
        }
    }
}

/// Config key of a core parameter name.
fn config_key(name: &str) -> &str {
    match name {
        "omega" => "system.omega",
        "lambda" => "system.lambda",
        "n" => "system.n",
        "g0" => "meter.g0",
        "T" => "meter.duration",
        "delta_p" => "meter.delta_p",
        "samples" => "samples",
        "initial" => "initial",
        "pointer" => "ensemble.pointer",
        "steps" => "ensemble.steps",
        "phi_steps" => "ensemble.phi_steps",
        "order" => "scheme.order",
        "schedule" => "scheme.schedule",
        "grid" => "sweep.grid",
        other => other,
    }
}
