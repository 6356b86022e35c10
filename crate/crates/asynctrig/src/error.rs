use thiserror::Error;

/// Errors raised by the scheduling library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("no sign change of the stability margin on [{lo}, {hi}]")]
    Range { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
