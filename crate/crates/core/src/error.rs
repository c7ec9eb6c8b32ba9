use thiserror::Error;

/// Errors raised by construction, validation and I/O.
///
/// Decoding failures are not errors; they are carried as data in
/// [`crate::decode::DecodeFailure`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdgError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl IdgError {
    /// Short machine-readable tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            IdgError::Input(_) => "input",
            IdgError::Infeasible(_) => "infeasible",
            IdgError::Capacity(_) => "capacity",
            IdgError::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, IdgError>;

macro_rules! input_err {
    ($($arg:tt)*) => { $crate::error::IdgError::Input(format!($($arg)*)) };
}
pub(crate) use input_err;
