use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the engine.
///
/// Variants are grouped so the command-line shell can map them onto its exit
/// codes: configuration problems, bad input data, and runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown objective `{0}`")]
    UnknownObjective(String),

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("invalid interval scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid input data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no cache entry for student `{student}` in unit `{unit}`; run `aggregate` first")]
    MissingCache { student: String, unit: String },

    #[error("cache entry for student `{student}` in unit `{unit}` is stale; run `aggregate` again")]
    StaleCache { student: String, unit: String },

    #[error("storage failure at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unresolvable selection ids: {0:?}")]
    UnresolvedSelection(Vec<String>),

    #[error("question must not be empty")]
    EmptyQuestion,

    #[error("narrative backend failure: {0}")]
    Backend(String),

    #[error("serialization failure: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Broad category of an [`Error`], used for exit-code mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::UnknownObjective(_)
            | Error::UnknownUnit(_)
            | Error::InvalidScheme(_)
            | Error::InvalidData(_)
            | Error::MissingCache { .. }
            | Error::StaleCache { .. }
            | Error::UnresolvedSelection(_)
            | Error::EmptyQuestion
            | Error::Serde(_) => ErrorCategory::Data,
            Error::Storage { .. } | Error::Backend(_) => ErrorCategory::Runtime,
        }
    }

    pub(crate) fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
