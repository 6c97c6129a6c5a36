use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Library(#[from] krondpp::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use krondpp::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Library(e) => match e {
                E::DimensionMismatch(_)
                | E::IndexOutOfRange { .. }
                | E::DuplicateIndex(_)
                | E::Infeasible { .. }
                | E::TooLarge { .. }
                | E::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_NUMERICAL,
            },
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Json { .. } => EXIT_IO,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
