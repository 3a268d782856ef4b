use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in `{field}`: {value}")]
    NonFinite { field: &'static str, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("delay {tau} s is not an integer multiple of the time step {dt} s")]
    DelayNotMultiple { tau: f64, dt: f64 },

    #[error("delayed query at t={t} s with tau={tau} s reaches past the history capacity")]
    HistoryExhausted { t: f64, tau: f64 },

    #[error("no sample stored at t={t} s")]
    MissingSample { t: f64 },

    #[error("gain pair is the invalid sentinel; engage the fallback controller")]
    InvalidGains,

    #[error("trajectory needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("unsupported table format version `{found}` (expected `{expected}`)")]
    VersionMismatch { found: String, expected: &'static str },

    #[error("malformed table line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("table has {found} cell rows, expected {expected}")]
    CellCountMismatch { expected: usize, found: usize },

    #[error("missing lookup table for the lookup controller")]
    MissingTable,

    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("matrix must be square and non-empty (got {rows}x{cols})")]
    BadMatrixShape { rows: usize, cols: usize },

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn ensure_finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { field, value })
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
