use std::path::PathBuf;

use thiserror::Error;

/// Exit code for invalid input or configuration.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical solver failures.
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config file '{path}': {message}")]
    Config { path: PathBuf, message: String },
    #[error("missing required key '{0}' (pass --{1} or set it in the config)")]
    MissingKey(&'static str, &'static str),
    #[error("key '{key}': file '{path}' does not exist")]
    MissingFile { key: &'static str, path: PathBuf },
    #[error("key '{key}': {message}")]
    Invalid { key: &'static str, message: String },
    #[error("key '{key}': cannot write '{path}': {message}")]
    Io { key: &'static str, path: PathBuf, message: String },
    #[error("key '{key}': {source}")]
    Core {
        key: &'static str,
        #[source]
        source: otlab::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } if is_solver_failure(source) => EXIT_SOLVER,
            _ => EXIT_VALIDATION,
        }
    }

    pub(crate) fn invalid(key: &'static str, message: impl Into<String>) -> Self {
        CliError::Invalid { key, message: message.into() }
    }
}

fn is_solver_failure(e: &otlab::Error) -> bool {
    use otlab::Error::*;
    matches!(e, NoConvergence { .. } | SolverFailure { .. } | UnmappedPoint(_))
}

/// Attach the config key responsible for a library error.
pub(crate) trait Context<T> {
    fn key(self, key: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for otlab::Result<T> {
    fn key(self, key: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { key, source })
    }
}
