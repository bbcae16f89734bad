use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("QP reduced Hessian is not positive definite")]
    NonConvex,

    #[error("Riccati iteration did not converge after {0} iterations")]
    RiccatiNoConvergence(usize),

    #[error("unsupported disturbance profile: {0}")]
    UnsupportedProfile(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver aborted at t = {time:.3} s after {failures} consecutive failures")]
    SolverAbort { time: f64, failures: usize },

    #[error("empty evaluation window: {0}")]
    EmptyWindow(String),
}

pub type Result<T> = std::result::Result<T, Error>;
