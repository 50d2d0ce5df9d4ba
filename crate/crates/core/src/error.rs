//! Crate-wide error type.

use std::fmt;

/// Error type shared by all modules.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// A square matrix was required.
    NotSquare { rows: usize, cols: usize },
    /// A linear system has no usable solution (zero or near-zero pivot).
    Singular,
    /// A value was NaN or infinite where finite input is required.
    NonFinite,
    /// An argument violated a documented precondition.
    InvalidArgument(String),
    /// A binary file did not start with the expected magic bytes.
    BadMagic,
    /// A binary file declared an unsupported format version.
    UnsupportedVersion(u16),
    /// A binary file ended before the declared payload was complete.
    Truncated,
    /// A text file failed to parse; `line` is 1-based.
    Parse { line: usize, message: String },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { op, lhs, rhs } => write!(
                f,
                "dimension mismatch in {op}: {}x{} vs {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Error::NotSquare { rows, cols } => {
                write!(f, "matrix must be square, got {rows}x{cols}")
            }
            Error::Singular => write!(f, "singular system: zero pivot encountered"),
            Error::NonFinite => write!(f, "non-finite value (NaN or Inf) in input"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::BadMagic => write!(f, "bad magic bytes: not a recognized file"),
            Error::UnsupportedVersion(v) => write!(f, "unsupported format version {v}"),
            Error::Truncated => write!(f, "file truncated before payload end"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
