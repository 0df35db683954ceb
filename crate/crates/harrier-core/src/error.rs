//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("timestamps not strictly increasing at row {row}")]
    Ordering { row: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("irregular sampling: {0}")]
    IrregularSampling(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("conflicting mapping for annotation {annotation:?}: {first} vs {second}")]
    MappingConflict {
        annotation: String,
        first: String,
        second: String,
    },

    #[error("unmapped annotation {0:?}")]
    UnmappedAnnotation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("filter design error: {0}")]
    FilterDesign(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("missing metadata for participant {0:?}")]
    MissingMetadata(String),

    #[error("incompatible model: {0}")]
    Compatibility(String),

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
