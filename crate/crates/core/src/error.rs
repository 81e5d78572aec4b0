use thiserror::Error;

use crate::Label;

pub type Result<T, E = DncmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DncmError {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("rejected spec: {0}")]
    InvalidSpec(String),

    #[error("registry holds no classes")]
    NoClasses,

    #[error("model holds no training data")]
    NoData,

    #[error("class {0} is not present in the registry")]
    UnknownClass(Label),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    TrainingDivergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("zero variance: all points are identical")]
    ZeroVariance,

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("malformed {what} file: {message}")]
    Format { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DncmError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        DncmError::InvalidInput(msg.into())
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        DncmError::InvalidSpec(msg.into())
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        DncmError::Format {
            what,
            message: msg.into(),
        }
    }
}
