use std::path::Path;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// A config field failed validation.
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    /// A compute stage rejected its inputs.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: ecsk_core::Error,
    },
    #[error("verification failed: {collisions} collisions, {aborted} aborted trials")]
    VerificationFailed { collisions: usize, aborted: usize },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Field { .. } | CliError::Usage(_) | CliError::Stage { .. } => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::VerificationFailed { .. } => EXIT_VERIFY,
        }
    }
}

/// Tags a core error with the pipeline stage it came from.
pub(crate) fn stage<T>(name: &'static str, r: ecsk_core::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Stage {
        stage: name,
        source,
    })
}
