use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error("csv schema mismatch: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] hsketch_core::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
