use std::path::PathBuf;

use thiserror::Error;

use crate::config::Violation;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),

    #[error("unknown bundled experiment '{0}' (see `qrc list`)")]
    UnknownExperiment(String),

    #[error(transparent)]
    Core(#[from] qrc_core::QrcError),

    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },

    #[error("thread pool: {0}")]
    Threads(String),

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ReadConfig { .. }
            | CliError::Parse(_)
            | CliError::Invalid(_)
            | CliError::UnknownExperiment(_) => EXIT_CONFIG,
            CliError::Core(_) | CliError::Output { .. } | CliError::Threads(_) => EXIT_RUNTIME,
            CliError::ChecksFailed { .. } => EXIT_CHECK,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Output { path: path.into(), message: err.to_string() }
    }
}
