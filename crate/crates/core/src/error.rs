use thiserror::Error;

/// Failures shared by every operation in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("budget exceeded: {what} needs {required} units, limit is {limit}")]
    BudgetExceeded {
        what: &'static str,
        required: u128,
        limit: u64,
    },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("degenerate quadrature: {0}")]
    DegenerateQuadrature(String),

    #[error("torus grid aliasing: mean {mean} is {residual:e} away from an integer")]
    Aliasing { mean: f64, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
