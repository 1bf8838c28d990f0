//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error at line {line}: {message}")]
    Ingest { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("lexical error at position {position}: {message}")]
    Lex { position: usize, message: String },

    #[error("syntax error: {message} (expected {expected})")]
    Syntax { message: String, expected: String },

    #[error("unsupported construct: {0}")]
    Unsupported(String),

    #[error("unknown table: {0}")]
    UnknownTable(String),

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error("ambiguous column reference: {0}")]
    AmbiguousColumn(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precision overflow at fill time: {message}; re-plan with a wider type or force-fallback")]
    PrecisionOverflow { message: String },

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("unbound parameter: @{0}")]
    UnboundParam(String),

    #[error("internal invariant violation: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
