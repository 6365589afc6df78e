//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by kernel construction and GP linear algebra.
#[derive(Debug, Error)]
pub enum KernelError {
    #[error("similarity input is not square: {rows} rows, {cols} cols")]
    NonSquareInput { rows: usize, cols: usize },
    #[error("non-finite similarity entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("diagonal entry {value} at index {index} outside [0.95, 1.05]; similarity provider looks broken")]
    DiagonalOutOfRange { index: usize, value: f64 },
    #[error("invalid hyperparameters: alpha={alpha}, sigma2={sigma2} (both must be > 0)")]
    InvalidHyperparams { alpha: f64, sigma2: f64 },
}

/// Errors from GP regression and hyperparameter fitting.
#[derive(Debug, Error)]
pub enum GpError {
    #[error("Cholesky factorization failed after jitter escalation up to {max_jitter}")]
    NumericalFailure { max_jitter: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Errors from the model-provider clients.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("request {request_id} to {endpoint} timed out after {seconds}s")]
    Timeout {
        request_id: String,
        endpoint: String,
        seconds: u64,
    },
    #[error("request {request_id}: malformed response: {detail}")]
    MalformedResponse { request_id: String, detail: String },
    #[error("request {request_id} to {endpoint}: HTTP status {code}")]
    HttpStatus {
        request_id: String,
        endpoint: String,
        code: u16,
    },
    #[error("similarity response is not square: {rows} rows for {expected} texts")]
    NonSquareResponse { rows: usize, expected: usize },
    #[error("text too short to perturb: {tokens} tokens, span length {span_length}")]
    TextTooShort { tokens: usize, span_length: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample {id} has no {field}; provider kind requires it")]
    MissingField { id: String, field: String },
}

/// Errors from the selection loop and detection pipeline. Provider failures
/// are tagged by which provider failed so callers can retry selectively.
#[derive(Debug, Error)]
pub enum DetectError {
    #[error("scorer failure: {0}")]
    ScorerFailure(#[source] ProviderError),
    #[error("perturber failure: {0}")]
    PerturberFailure(#[source] ProviderError),
    #[error("similarity failure: {0}")]
    SimilarityFailure(#[source] ProviderError),
    #[error(transparent)]
    Numerical(#[from] GpError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("selection pool exhausted before the typical set was initialized")]
    PoolExhausted,
    #[error("selection pool is empty")]
    EmptyPool,
    #[error("perturbation scores are empty")]
    EmptyScores,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Errors from dataset ingestion and report generation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {detail}")]
    ParseError { line: usize, detail: String },
    #[error("duplicate record id {id} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("record at line {line} is missing a label")]
    MissingLabel { line: usize },
    #[error("AUROC requires both classes; got only one")]
    SingleClass,
    #[error("typicality report needs at least 2 selections, got {got}")]
    TooFewSelections { got: usize },
    #[error(transparent)]
    Detect(#[from] DetectError),
}
