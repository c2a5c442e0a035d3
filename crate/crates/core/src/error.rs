use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a function (e.g. `lgamma(-1)`).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A value violates a type invariant or an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Training or evaluation produced a non-finite quantity.
    #[error("numerical abort: {0}")]
    Numerical(String),

    /// A config file failed validation. `path` points at the offending field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 1 for user/validation
    /// errors, 2 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_nonempty(what: &str, len: usize) -> Result<()> {
    if len == 0 {
        Err(Error::InvalidArgument(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}
