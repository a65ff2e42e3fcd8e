use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance error: {0}")]
    Instance(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded linear program")]
    Unbounded,
    #[error("iteration limit reached after {0} simplex iterations")]
    IterationLimit(usize),
    #[error("node limit reached after {0} branch-and-bound nodes")]
    NodeLimit(usize),
    #[error("model error: {0}")]
    Model(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
