use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing artifact {0} (run the earlier pipeline stage first)")]
    MissingArtifact(PathBuf),
    #[error("target {target}: {source}")]
    Target {
        target: String,
        #[source]
        source: stcausal::Error,
    },
    #[error(transparent)]
    Core(#[from] stcausal::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn target(target: impl ToString, source: stcausal::Error) -> Self {
        CliError::Target {
            target: target.to_string(),
            source,
        }
    }

    /// 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> ExitCode {
        let numerical = match self {
            CliError::Target { source, .. } | CliError::Core(source) => source.is_numerical(),
            _ => false,
        };
        ExitCode::from(if numerical { 3 } else { 2 })
    }
}
