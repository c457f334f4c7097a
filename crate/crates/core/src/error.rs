use alloc::string::String;

use thiserror::Error;

/// A record that could not be turned into an [`Entity`](crate::Entity).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed record at byte {offset}: {reason}")]
pub struct ParseError {
    /// Byte offset into the record where parsing failed.
    pub offset: usize,
    pub reason: String,
}

impl ParseError {
    pub fn new(offset: usize, reason: impl Into<String>) -> Self {
        Self {
            offset,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// Operation not allowed in the current lifecycle state.
    #[error("invalid state: {0}")]
    State(String),

    #[error("time limit exceeded: {0}")]
    TimeLimit(String),

    #[error("reports were computed against different indexes ({0} vs {1})")]
    IndexMismatch(String, String),

    #[error("corrupt snapshot: {0}")]
    Snapshot(String),

    /// A statistic is undefined for the given input (e.g. zero variance).
    #[error("undefined statistic: {0}")]
    Undefined(String),
}

pub type Result<T, E = CoreError> = core::result::Result<T, E>;
