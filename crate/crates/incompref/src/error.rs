use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty set: {0}")]
    EmptySet(String),
    #[error("root not bracketed: {0}")]
    Bracket(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
