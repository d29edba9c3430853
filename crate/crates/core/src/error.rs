//! Error type shared by every fairgauge module.

use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, FairError>;

#[derive(Debug, Error)]
pub enum FairError {
    /// Malformed comparison file; `line` is 1-based and counts the header.
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// Structured document (rate table, scenario, config) failed to load.
    #[error("{context}: {reason}")]
    Document { context: String, reason: String },

    /// A value violated a declared bound. `field` is a dotted path.
    #[error("invalid value at `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    /// Comparison set is not usable for a rate computation.
    #[error("group `{group}`: {reason}")]
    GroupRate { group: String, reason: String },

    #[error("threshold unsolvable: {0}")]
    Unsolvable(String),

    /// Fairness metric undefined, e.g. fewer than two groups.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("unknown report format `{0}`")]
    UnknownFormat(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Wraps an error with the pipeline stage that raised it.
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<FairError>,
    },
}

impl FairError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FairError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FairError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        FairError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 input error, 3 undefined metric, 4 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            FairError::UndefinedMetric(_) => 3,
            FairError::Io { .. } => 4,
            FairError::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
