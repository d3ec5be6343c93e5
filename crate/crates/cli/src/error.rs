use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Scenario(#[from] drcbf_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const VIOLATION: i32 = 2;
    pub const FAULT: i32 = 3;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Scenario(_) => exit::CONFIG,
            CliError::Io { .. } | CliError::Csv { .. } => exit::FAULT,
        }
    }
}
