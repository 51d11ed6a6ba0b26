//! Library backing the `segbeam` binary: config resolution, run
//! orchestration, and partition summaries.

pub mod config;
pub mod pipeline;
pub mod summary;

/// CLI-level errors carrying the process exit code: 2 for configuration
/// problems, 3 for data problems.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(segbeam::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(segbeam::Error::Parameter(_)) => 2,
            CliError::Run(_) => 3,
        }
    }

    pub(crate) fn from_io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Run(segbeam::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<segbeam::Error> for CliError {
    fn from(e: segbeam::Error) -> Self {
        CliError::Run(e)
    }
}
