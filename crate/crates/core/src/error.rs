use thiserror::Error;

use crate::sdp::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    EigenNonConvergence { dim: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid uncertainty set: {0}")]
    InvalidSpec(String),
    #[error("solver returned {status:?}: {context}")]
    Solver { status: SolveStatus, context: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
