use thiserror::Error;

use crate::data::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("chi-squared map requires nonnegative input, found {value} at index {index}")]
    NegativeInput { index: usize, value: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Format(#[from] FormatError),
}
