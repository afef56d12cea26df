use thiserror::Error;

/// Errors surfaced by the qfit library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("bounds error at line {line}: {msg}")]
    Bounds { line: usize, msg: String },

    #[error("unsupported export: {0}")]
    UnsupportedExport(String),

    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("stale cache: {0}")]
    StaleCache(String),
}

pub type Result<T> = std::result::Result<T, Error>;
