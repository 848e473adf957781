use std::path::PathBuf;

use journey_core::ErrorCategory;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] journey_core::Error),

    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cache directory {path} is not readable: {reason}")]
    CacheUnreadable { path: PathBuf, reason: String },

    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("server failed: {0}")]
    Server(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => EXIT_CONFIG,
                ErrorCategory::Data => EXIT_DATA,
                ErrorCategory::Runtime => EXIT_RUNTIME,
            },
            CliError::Input { .. } | CliError::CacheUnreadable { .. } => EXIT_DATA,
            CliError::Output { .. } | CliError::Bind { .. } | CliError::Server(_) => EXIT_RUNTIME,
        }
    }
}
