use std::path::{Path, PathBuf};

use halt_core::calendar::CalendarError;
use halt_core::events::EventError;
use halt_core::market_data::DataError;
use halt_core::pipeline::PipelineError;
use halt_core::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Calendar {
        path: PathBuf,
        source: CalendarError,
    },
    #[error("{}: {source}", path.display())]
    Bars { path: PathBuf, source: DataError },
    #[error("{}: {source}", path.display())]
    Halts { path: PathBuf, source: EventError },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        CliError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Validation(_) => 2,
            _ => 1,
        }
    }
}
