//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by data validation, estimation, peeling, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// The data (or the requested subset of it) contains no events.
    #[error("no events in the data")]
    NoEvents,

    /// The log-rank variance is exactly zero, so the statistic is undefined.
    #[error("log-rank variance is zero")]
    DegenerateVariance,

    /// Concordance is undefined because no pair of observations is orderable.
    #[error("no permissible pairs for concordance")]
    NoPermissiblePairs,

    /// No eligible peel (or paste) candidate exists.
    #[error("no eligible peel candidates")]
    NoCandidates,

    /// Inputs violate a precondition (mismatched lengths, empty groups, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The censoring-scale bisection could not bracket or converge.
    #[error("censoring calibration failed: {0}")]
    CalibrationFailure(String),

    /// A cell of an input file failed to parse; the location names the
    /// 1-based data row and the offending column.
    #[error("row {row}, column '{column}': {reason}")]
    Parse {
        row: usize,
        column: String,
        reason: String,
    },

    /// An input file is missing required columns or is otherwise malformed.
    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code for the error kind, used in error records
    /// emitted by the command-line interface.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NoEvents => "no_events",
            Error::DegenerateVariance => "degenerate_variance",
            Error::NoPermissiblePairs => "no_permissible_pairs",
            Error::NoCandidates => "no_candidates",
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidConfig(_) => "invalid_config",
            Error::CalibrationFailure(_) => "calibration_failure",
            Error::Parse { .. } => "parse_error",
            Error::Schema(_) => "schema_error",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
            Error::Csv(_) => "csv_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
