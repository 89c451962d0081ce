//! Error type for the IO layer and CLI, with exit-code partitioning.

use std::path::PathBuf;

use attire_core::Error as CoreError;

pub type CliResult<T> = Result<T, CliError>;

/// Exit codes: usage errors 2, data errors 3, numerical errors 4, integrity
/// errors 5.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{source} ({path})")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("gradient check failed: max relative error {max_rel_error:.3e} (threshold {threshold:.1e})")]
    GradCheck { max_rel_error: f64, threshold: f64 },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Parse { .. } => 3,
            CliError::Core(core) => {
                if core.is_numerical() {
                    4
                } else if core.is_integrity() {
                    5
                } else {
                    3
                }
            }
            CliError::GradCheck { .. } => 4,
        }
    }
}
