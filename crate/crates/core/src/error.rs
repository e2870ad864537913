use std::path::PathBuf;

use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    MatrixMarket { path: PathBuf, line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error("matrix is singular to working precision ({context})")]
    Singular { context: String },

    #[error("eigenvalue is not simple: gap {gap:e} below threshold {threshold:e}")]
    NotSimple { gap: f64, threshold: f64 },

    #[error("eigensolver did not converge after {iterations} restarts (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parameter point {omega:?} lies outside the domain box")]
    OutOfDomain { omega: Vec<f64> },

    #[error("Hessian asymmetry {asymmetry:e} exceeds {limit:e}; derivative inputs are inaccurate")]
    HessianAsymmetry { asymmetry: f64, limit: f64 },

    #[error("dense oracle limited to n <= {cap}, got n = {n}")]
    OracleCap { n: usize, cap: usize },

    #[error("surrogate manifest: {0}")]
    Manifest(String),

    #[error("at omega = {omega:?}: {source}")]
    AtPoint {
        omega: Vec<f64>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn at(self, omega: &[f64]) -> Self {
        Error::AtPoint { omega: omega.to_vec(), source: Box::new(self) }
    }
}
