use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("numeric breakdown in {phase} after {iterations} pivots: {detail}")]
    Numeric {
        phase: &'static str,
        iterations: usize,
        detail: String,
    },
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("branch-and-bound node limit ({0}) exceeded")]
    NodeLimit(usize),
}
