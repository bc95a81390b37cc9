use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    ChecksFailed = 1,
    Usage = 2,
    Runtime = 3,
    SweepFailed = 4,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0} already exists; outputs are write-once")]
    Exists(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] traffic_dfa_core::Error),
    #[error("every sweep cell failed")]
    AllCellsFailed,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Exists(_) => ExitCode::Usage,
            CliError::Core(traffic_dfa_core::Error::InvalidParameter { .. }) => ExitCode::Usage,
            CliError::Io { .. } | CliError::Core(_) => ExitCode::Runtime,
            CliError::AllCellsFailed => ExitCode::SweepFailed,
        }
    }
}
