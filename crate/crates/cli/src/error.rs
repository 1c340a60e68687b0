use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Verification(String),

    #[error(transparent)]
    Core(#[from] rckl::Error),
}

impl CliError {
    pub fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Stable prefix for the error line on stderr.
    pub fn code(&self) -> &'static str {
        use rckl::Error as E;
        match self {
            CliError::Parse { .. } => "E_PARSE",
            CliError::Io { .. } => "E_IO",
            CliError::Config(_) => "E_CONFIG",
            CliError::Verification(_) => "E_VERIFY",
            CliError::Core(e) => match e {
                E::Conflict(_) => "E_CONFLICT",
                E::Divergence { .. } => "E_DIVERGE",
                E::DimensionMismatch { .. } => "E_DIM",
                E::Numerical(_) => "E_NUMERIC",
                E::Exhausted(_) => "E_EXHAUSTED",
                E::InvalidSize(_)
                | E::InvalidArgument(_)
                | E::InvalidInput(_)
                | E::DegenerateKernel(_) => "E_INPUT",
            },
        }
    }
}
