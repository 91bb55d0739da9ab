use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability table: {0}")]
    InvalidPmf(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("table of {cells} cells exceeds the {limit}-cell limit")]
    SizeLimit { cells: usize, limit: usize },
    #[error("not implemented: {0}")]
    NotImplemented(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("cap exceeded: {0}")]
    CapExceeded(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
