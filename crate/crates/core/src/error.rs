use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes. The CLI maps each one to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad configuration or arguments.
    Config,
    /// Missing, malformed or mismatched input data.
    Data,
    /// A stored artifact violates one of its invariants.
    Property,
    /// Misuse of a stateful API (e.g. stepping a finished episode).
    Usage,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("environment construction failed: {0}")]
    EnvConstruction(String),

    #[error("invalid action {action}: environment has {action_count} actions")]
    InvalidAction { action: usize, action_count: usize },

    #[error("episode already finished after {steps} steps")]
    EpisodeFinished { steps: usize },

    #[error("observation has {got} dimensions, discretizer expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("config hash mismatch: {context} has {found}, expected {expected}")]
    HashMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("trajectory {0} is empty")]
    EmptyTrajectory(String),

    #[error("unknown trajectory id {0:?}")]
    UnknownTrajectory(String),

    #[error("replay diverged from the recorded trajectory at step {step}")]
    ReplayDivergence { step: usize },

    #[error("invalid counterfactual request: {0}")]
    InvalidRequest(String),

    #[error("KL divergence undefined: reference assigns zero probability to action {action}")]
    UndefinedKl { action: usize },

    #[error("counterfactual set is empty")]
    EmptyCounterfactualSet,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_)
            | Error::EnvConstruction(_)
            | Error::NonConvergence { .. }
            | Error::UndefinedKl { .. } => ErrorCategory::Config,
            Error::InvalidAction { .. }
            | Error::EpisodeFinished { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidRequest(_)
            | Error::EmptyCounterfactualSet => ErrorCategory::Usage,
            Error::Invariant(_) | Error::ReplayDivergence { .. } => ErrorCategory::Property,
            Error::Malformed { .. }
            | Error::VersionMismatch { .. }
            | Error::HashMismatch { .. }
            | Error::EmptyDataset
            | Error::EmptyTrajectory(_)
            | Error::UnknownTrajectory(_)
            | Error::Io { .. }
            | Error::Json(_) => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
