use std::path::PathBuf;

use thiserror::Error;

/// Failure of a command, carrying the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad config: {0}")]
    Config(String),
    #[error("missing prerequisite {}: run `popvec {producer}` first", path.display())]
    Missing { path: PathBuf, producer: &'static str },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] popvec::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
