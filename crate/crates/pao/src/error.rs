use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("universe mismatch: {0}")]
    UniverseMismatch(String),
    #[error("enumeration budget exceeded: {needed} candidates > budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("update function contract violated at agent {agent}: {detail}")]
    ContractViolation { agent: usize, detail: String },
    #[error("menu function contract violated: {0}")]
    MenuContract(String),
    #[error("procedure did not terminate within {steps} steps")]
    Divergence { steps: usize },
    #[error("invalid choice by agent {agent} in period {period}: {detail}")]
    InvalidChoice { agent: usize, period: usize, detail: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition not met: {0}")]
    Precondition(String),
    #[error("choice already submitted by seat {seat} in period {period}")]
    AlreadySubmitted { seat: usize, period: usize },
    #[error("seat {seat} is not awaited in period {period}")]
    NotAwaited { seat: usize, period: usize },
    #[error("replay failed at offset {offset}: {detail}")]
    Replay { offset: usize, detail: String },
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Validation(format!("json: {e}"))
    }
}
