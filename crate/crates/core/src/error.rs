use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PermError {
    #[error("invalid permutation {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("position {index} out of range for permutation of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("positions must be strictly increasing")]
    UnsortedIndices,
    #[error("permutation {0} is not layered")]
    NotLayered(String),
}

#[derive(Debug, Error)]
pub enum FlagError {
    #[error("flag types differ: {0} vs {1}")]
    TypeMismatch(String, String),
    #[error("target too short: need length >= {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("N = {n} does not satisfy N = 2m - t for m = {m}, t = {t}")]
    BadComplexity { n: usize, m: usize, t: usize },
    #[error("support does not induce the type")]
    BadSupport,
    #[error("table file {path}: {reason}")]
    TableFormat { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("density pattern of length {pattern} exceeds N = {n}")]
    PatternTooLong { pattern: usize, n: usize },
    #[error("layered-only mode needs a layered density pattern, got {0}")]
    PatternNotLayered(String),
    #[error(transparent)]
    Flag(#[from] FlagError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures while running or reading an external SDP solver. Each variant
/// carries whatever the solver printed.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver executable {0:?} could not be found")]
    NotFound(String),
    #[error("solver exited with status {code:?}\n{log}")]
    NonZeroExit { code: Option<i32>, log: String },
    #[error("solver timed out after {seconds} s\n{log}")]
    Timeout { seconds: u64, log: String },
    #[error("could not parse solver output: {reason}\n{log}")]
    Unparseable { reason: String, log: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("block {block}: numeric matrix is not PSD even after an epsilon shift (eigenvalue {eigenvalue:e})")]
    NotCertifiable { block: usize, eigenvalue: f64 },
    #[error("expected {expected} L matrices, got {got}")]
    BlockCountMismatch { expected: usize, got: usize },
    #[error("block {block}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        block: usize,
        expected: usize,
        got: usize,
    },
}

/// Problems reading or validating a certificate file.
#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("certificate JSON error at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("certificate field `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for CertificateError {
    fn from(err: serde_json::Error) -> Self {
        CertificateError::Json {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PermutonError {
    #[error("invalid permuton: {0}")]
    Invalid(String),
    #[error("no stored maximiser for pattern {0}")]
    UnsupportedMaximiser(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("parameters out of range: {0}")]
    Domain(String),
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
