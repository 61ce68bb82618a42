//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while reading or writing tag files and curve files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unknown channel token `{token}` (expected 1a, 1b, 2a, 2b)")]
    BadChannel { line: usize, token: String },
    #[error("line {line}: events not sorted by (trial, tick): {msg}")]
    NotMonotonic { line: usize, msg: String },
    #[error("line {line}: tick {tick} beyond trial duration of {duration_ns} ns")]
    TickBeyondDuration { line: usize, tick: u64, duration_ns: u64 },
    #[error("offset {offset}: {msg}")]
    MalformedBinary { offset: usize, msg: String },
    #[error("missing required header `{0}`")]
    MissingHeader(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from trial conditioning and correlation estimators.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("binning mismatch: {0}")]
    BinningMismatch(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("histogram for pair {0} not accumulated")]
    MissingHistogram(String),
}

/// Errors from the least-squares engine and fit protocols.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid fit setup: {0}")]
    InvalidSetup(String),
    #[error("singular normal equations: {0}")]
    Singular(String),
    #[error("not enough data points: have {have}, need more than {need}")]
    TooFewPoints { have: usize, need: usize },
}

/// Errors from the synthetic event generator.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("wavepacket has zero excess mass but pair_rate > 0")]
    DegenerateWavepacket,
    #[error("pair rate {required:.3} per trial unreachable (limit {limit:.3}, 10x the weaker singles rate)")]
    UnreachableTarget { required: f64, limit: f64 },
}
