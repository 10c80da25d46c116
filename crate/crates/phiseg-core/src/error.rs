use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two tensors (or a tensor and an expected contract) disagree on shape.
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    /// A scalar argument is outside its documented domain.
    InvalidArgument { op: &'static str, message: String },
    /// A binary file (PGM, checkpoint) is malformed; `offset` is the byte
    /// position at which parsing failed.
    Format { what: String, offset: usize },
    /// Config file text could not be parsed, or contains unknown keys.
    Config { line: usize, message: String },
    /// Loading a checkpoint against a model with a different architecture.
    ParameterMismatch { name: String, message: String },
    /// Training produced a non-finite loss or gradient.
    Diverged { message: String },
    /// Wrapped I/O error (path + message; io::Error itself is not Clone).
    Io { path: String, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, expected, got } => {
                write!(f, "{op}: shape mismatch, expected {expected}, got {got}")
            }
            Error::InvalidArgument { op, message } => write!(f, "{op}: {message}"),
            Error::Format { what, offset } => {
                write!(f, "malformed {what} at byte offset {offset}")
            }
            Error::Config { line, message } => write!(f, "config line {line}: {message}"),
            Error::ParameterMismatch { name, message } => {
                write!(f, "parameter `{name}`: {message}")
            }
            Error::Diverged { message } => write!(f, "training diverged: {message}"),
            Error::Io { path, message } => write!(f, "{path}: {message}"),
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    pub fn io(path: impl Into<String>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
