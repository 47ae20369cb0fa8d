//! Library surface of the `dyce` binary: configuration parsing, file
//! formats, and the experiment driver. The binary in `main.rs` is a thin
//! clap wrapper over [`commands`].

pub mod commands;
pub mod config;
pub mod experiment;
pub mod io;

use config::ConfigError;

/// Failures mapped to the exit-code contract: configuration problems
/// exit 2, numeric failures exit 3, anything else exits 1.
pub enum AppError {
    Config(ConfigError),
    Numeric(String),
    Io(std::io::Error),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numeric(_) => 3,
            AppError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(e) => write!(f, "error: {e}"),
            AppError::Numeric(e) => write!(f, "numeric failure: {e}"),
            AppError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e)
    }
}

impl From<dyce_core::Error> for AppError {
    fn from(e: dyce_core::Error) -> Self {
        AppError::Numeric(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e)
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Io(e.into())
    }
}
