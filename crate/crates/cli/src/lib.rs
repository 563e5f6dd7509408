//! Command-line surface: argument parsing, dataset ingestion, report and
//! plot emission. Estimation lives in `fairaudit-core`.

pub mod commands;
pub mod ingest;
pub mod plots;
pub mod report;

use std::fmt;

/// CLI failure with its exit code: 2 usage, 3 data, 4 estimation.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Estimation(m) => write!(f, "estimation error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
