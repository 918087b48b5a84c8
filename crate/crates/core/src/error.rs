use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single validation problem found while reading an input file.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub file: String,
    /// 1-based line number, counting the header as line 1.
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("invalid match {match_id}: {reason}")]
    InvalidMatch { match_id: String, reason: String },

    #[error("invalid match state: {0}")]
    InvalidState(String),

    #[error("time regression: clock is at {from}, requested {to}")]
    TimeRegression { from: f64, to: f64 },

    #[error("unknown model name {0:?}")]
    UnknownModel(String),

    #[error("unknown team {0:?}")]
    UnknownTeam(String),

    #[error("model specification error: {0}")]
    Spec(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent linear constraints (rank {rank} < augmented rank {augmented_rank})")]
    InconsistentConstraints { rank: usize, augmented_rank: usize },

    #[error("model is not identifiable on this data: {flat_directions} flat direction(s) remain after constraints")]
    NonIdentifiable { flat_directions: usize },

    #[error("no convergence after {iterations} iterations (reduced gradient {gradient_norm:e})")]
    IterationLimit { iterations: usize, gradient_norm: f64 },

    #[error("log-likelihood is unbounded above: {0}")]
    Divergence(String),

    #[error("line search failed at iteration {iteration} (reduced gradient {gradient_norm:e})")]
    LineSearch { iteration: usize, gradient_norm: f64 },

    #[error("models {small:?} and {large:?} are not nested; likelihood-ratio test refused")]
    NotNested { small: String, large: String },

    #[error("{} validation error(s), first: {}", .0.len(), .0.first().map(|e| e.to_string()).unwrap_or_default())]
    Validation(Vec<LineError>),

    #[error("artifact schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonIdentifiable { .. }
                | Error::IterationLimit { .. }
                | Error::Divergence(_)
                | Error::LineSearch { .. }
                | Error::NonFinite(_)
                | Error::InconsistentConstraints { .. }
        )
    }
}
