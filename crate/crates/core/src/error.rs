use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("not enough '{label}' pairs: need {needed}, have {available}")]
    Capacity {
        label: String,
        needed: usize,
        available: usize,
    },

    #[error("index {index} out of bounds for length {len}")]
    Bounds { index: usize, len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend returned HTTP {status}: {body}")]
    Backend { status: u16, body: String },

    #[error("transient failure after {attempts} attempts: {last}")]
    Transient { attempts: u32, last: String },

    #[error("no JSON object in response: {0}")]
    Parse(String),

    #[error("response does not match the expected schema: {0}")]
    Schema(String),

    #[error("cell (row {row}, column {col}) could not be scored: {source}")]
    Cell {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("document {doc_id}: {source}")]
    Document {
        doc_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("document {doc_id}, summary sentence {sentence}: {source}")]
    SummarySentence {
        doc_id: String,
        sentence: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unknown reference: {0}")]
    Reference(String),

    #[error("stage '{stage}' requires the output of stage '{required}'")]
    Dependency { stage: String, required: String },

    #[error("invalid run configuration: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_document(self, doc_id: &str) -> Self {
        Error::Document {
            doc_id: doc_id.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
