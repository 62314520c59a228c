use std::path::PathBuf;

use voltrisk_solver::SolverError;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("topology error: {0}")]
    Topology(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("conditioning on {value} failed: every component likelihood underflows")]
    DegenerateConditioning { value: f64 },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("problem is unbounded: {0}")]
    Unbounded(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CoreError>;
