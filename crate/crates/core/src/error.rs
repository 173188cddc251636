use thiserror::Error;

/// Errors raised by the code constructions, decoders, allocator and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain the operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in size do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A decoder or harness configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An allocation model has no feasible assignment.
    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
