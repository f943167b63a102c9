use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum KgmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("grid too coarse: order {order} requires more than {points} grid points (need G > 2n)")]
    GridTooCoarse { order: usize, points: usize },

    #[error("matrix is not positive definite at grid angle {theta:.6}")]
    NotPositiveDefinite { theta: f64 },

    #[error("matrix is singular at grid angle {theta:.6}")]
    Singular { theta: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("block-Toeplitz lag matrix is not positive definite (minimum eigenvalue {min_eigenvalue:.3e})")]
    ToeplitzNotPositiveDefinite { min_eigenvalue: f64 },

    #[error("factorization not converged: relative residual {residual:.3e} at depth {depth}")]
    FactorizationNotConverged { residual: f64, depth: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Numerical,
}

impl KgmError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            KgmError::InvalidArgument(_)
            | KgmError::Dimension(_)
            | KgmError::GridTooCoarse { .. }
            | KgmError::Config(_) => ErrorKind::Validation,
            KgmError::Parse { .. } | KgmError::Io(_) | KgmError::Json(_) => ErrorKind::Data,
            KgmError::NotPositiveDefinite { .. }
            | KgmError::Singular { .. }
            | KgmError::ToeplitzNotPositiveDefinite { .. }
            | KgmError::FactorizationNotConverged { .. }
            | KgmError::Numerical(_) => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, KgmError>;
