use thiserror::Error;

/// Errors produced by ingestion, metric, sampling and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("schema error: column `{column}` is missing from the CSV header")]
    MissingColumn { column: String },

    #[error("line {line}: cannot parse `{value}` in column `{column}` as a number")]
    Parse {
        line: usize,
        column: String,
        value: String,
    },

    #[error("line {line}: unknown level `{value}` for `{column}` (known levels: {})", known.join(", "))]
    UnknownLevel {
        line: usize,
        column: String,
        value: String,
        known: Vec<String>,
    },

    #[error("value {value} of `{variable}` is outside the binned range [{lower}, {upper}{close}")]
    OutOfRange {
        variable: String,
        value: f64,
        lower: f64,
        upper: f64,
        close: char,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate outcome: need at least one case and one control (got {cases} cases, {controls} controls)")]
    DegenerateOutcome { cases: usize, controls: usize },

    #[error("degenerate comparison: both variances are zero but the AUCs differ")]
    DegenerateComparison,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
