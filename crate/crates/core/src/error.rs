use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters or configuration.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// Training diverged or produced non-finite values.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate example id {0:?}")]
    DuplicateId(String),

    #[error("line {line}: label {label:?} is not in the class manifest")]
    UnknownLabel { line: usize, label: String },

    #[error("invalid class manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class {class:?} has {found} examples, at least {needed} required")]
    TooFewExamples {
        class: String,
        needed: usize,
        found: usize,
    },

    #[error("id mismatch at position {position}: expected {expected:?}, found {found:?}")]
    IdMismatch {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("row count mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("row {row} ({id}): probabilities sum to {sum}")]
    RowSum { row: usize, id: String, sum: f64 },

    #[error("row {row} ({id}): probability {value} outside [0, 1]")]
    ProbabilityRange { row: usize, id: String, value: f64 },

    #[error("unknown example id {0:?}")]
    UnknownId(String),

    #[error("non-finite loss in epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) => ErrorKind::Usage,
            Error::NonFiniteLoss { .. } => ErrorKind::Numeric,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}

/// Attach a pipeline stage name to errors.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
