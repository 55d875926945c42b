use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("coefficient hypotheses violated: {}", .0.join("; "))]
    Hypothesis(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed data in {path}: {message}")]
    Data { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), message: err.to_string() }
    }

    pub fn data(path: &Path, message: impl Into<String>) -> Self {
        CliError::Data { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit code: 2 config or hypothesis rejection, 3 numerical
    /// failure, 4 I/O failure (including unreadable data files).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Hypothesis(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } | CliError::Data { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
