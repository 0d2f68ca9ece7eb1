use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel error: non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    #[error("attention over an empty history (pad with id 0 first)")]
    EmptyHistory,

    #[error("id {id} out of vocabulary for `{table}` (size {vocab})")]
    OutOfVocab {
        table: String,
        id: usize,
        vocab: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed sample: field `{0}`")]
    MalformedSample(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("loss function is not deterministic (two evaluations differ: {first} vs {second})")]
    NonDeterministic { first: f64, second: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("missing input {}: run `{producer}` first", path.display())]
    MissingInput { path: PathBuf, producer: String },

    #[error("{}:{line}: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
