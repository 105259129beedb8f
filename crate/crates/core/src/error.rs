use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates one of the model's preconditions. The message
    /// names the violated constraint.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { max_asymmetry: f64, tolerance: f64 },

    #[error("index {k} outside the valid range {range}")]
    OutOfRange { k: usize, range: String },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular normal equations; use ridge > 0")]
    Singular,

    #[error("optimization diverged at step {step} (loss {loss:e}); try a smaller learning_rate")]
    Diverged { step: usize, loss: f64 },

    #[error("eigensolver failed to converge after {0} iterations")]
    NoConvergence(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
