//! Crate-wide error type.
//!
//! Errors are split into two families for the CLI exit-code contract:
//! problems with the data (exit 1) and problems with the configuration
//! (exit 2). [`Error::exit_code`] encodes that mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("non-positive price {value} at line {line}")]
    NonPositivePrice { line: u64, value: f64 },

    #[error("duplicate observation for {instrument} on {date} at line {line}")]
    DuplicateObservation {
        line: u64,
        date: String,
        instrument: String,
    },

    #[error("input contains no observations")]
    EmptyInput,

    #[error("instrument {0} has no observations")]
    EmptySeries(String),

    #[error("need at least {need} instruments, have {have}")]
    TooFewInstruments { have: usize, need: usize },

    #[error("calendars share no common date across all instruments")]
    EmptyIntersection,

    #[error("no window satisfies the minimum size of {min_days} rows")]
    NoWindow { min_days: usize },

    #[error("{context}: need at least {need} rows, have {have}")]
    TooFewRows {
        context: String,
        have: usize,
        need: usize,
    },

    #[error("window {window}: every column was excluded for zero variance")]
    AllColumnsExcluded { window: String },

    #[error("implied correlation matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("output directory {0} already exists (pass --force to replace it)")]
    OutputExists(String),
}

impl Error {
    /// CLI exit code for this error: 2 for configuration problems,
    /// 1 for data and i/o problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidSynthSpec(_)
            | Error::InvalidConfig(_)
            | Error::NotPositiveSemiDefinite { .. }
            | Error::OutputExists(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
