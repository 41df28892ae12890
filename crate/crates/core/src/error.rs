use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: malformed row: {reason}")]
    MalformedRow { path: PathBuf, line: u64, reason: String },
    #[error("unknown sensor `{0}`")]
    UnknownSensor(String),
    #[error("duplicate timestamp {timestamp} for sensor `{sensor}`")]
    DuplicateTimestamp { sensor: String, timestamp: String },
    #[error("no meteorology station falls inside the region")]
    EmptyRegion,
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("season {season} has {days} days, fewer than twice the {test_days} test days")]
    InsufficientData { season: String, days: usize, test_days: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("symbolic database has no days")]
    EmptyDatabase,
    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),
    #[error("empty timestamp list")]
    EmptyTimestampList,
    #[error("target {0} has no pattern occurrences")]
    NoPatterns(String),
    #[error("no usable design rows for {0}")]
    NoUsableRows(String),
    #[error("normal system is singular even after ridge regularization")]
    SingularSystem,
    #[error("cluster {0} collapsed and re-seeding did not recover it")]
    DegenerateCluster(usize),
    #[error("lag window incomplete at {0}")]
    MissingLags(String),
    #[error("no trained model for node {0}")]
    MissingModel(String),
    #[error("synthetic system still unstable after rescaling (spectral radius {0:.4})")]
    UnstableSystem(f64),
    #[error("coordinate descent did not converge after {0} sweeps")]
    NonConvergence(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or usage) map to a
    /// distinct process exit status in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem | Error::DegenerateCluster(_) | Error::UnstableSystem(_) | Error::NonConvergence(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
