use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid invoice {invoice_id}: {reason}")]
    InvalidInvoice { invoice_id: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}: schema mismatch: {reason}")]
    Schema { path: PathBuf, reason: String },

    #[error("window size {0} outside [3, 12] months")]
    WindowSize(u32),

    #[error("history for customer {expected} contains invoice {invoice_id} of customer {found}")]
    ForeignHistory {
        expected: String,
        found: String,
        invoice_id: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("split cutoff {cutoff} outside data range [{first}, {last}]")]
    CutoffOutOfRange {
        cutoff: chrono::NaiveDate,
        first: chrono::NaiveDate,
        last: chrono::NaiveDate,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("feature schema mismatch: model expects {expected} columns {expected_names:?}, got {found_names:?}")]
    SchemaMismatch {
        expected: usize,
        expected_names: Vec<String>,
        found_names: Vec<String>,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unknown model kind `{0}`; valid kinds: {valid}", valid = crate::models::ModelKind::valid_names())]
    UnknownModelKind(String),

    #[error("element sets of the two orders differ: {0}")]
    OrderMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
