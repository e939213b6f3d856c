use thiserror::Error;

/// A value outside the domain of a pure calculation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("domain error: {message}")]
pub struct DomainError {
    pub message: String,
}

impl DomainError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }
}

/// Where in an input a parse failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Byte offset into a binary stream.
    Byte(u64),
    /// One-based line number in a text stream.
    Line(u64),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Byte(b) => write!(f, "byte offset {b}"),
            Location::Line(l) => write!(f, "line {l}"),
        }
    }
}

#[derive(Debug, Error)]
#[error("parse error at {location}: {message}")]
pub struct ParseError {
    pub location: Location,
    pub message: String,
}

impl ParseError {
    pub fn at_byte(offset: u64, message: impl Into<String>) -> Self {
        Self { location: Location::Byte(offset), message: message.into() }
    }

    pub fn at_line(line: u64, message: impl Into<String>) -> Self {
        Self { location: Location::Line(line), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("clock alignment not found: {0}")]
    AlignmentNotFound(String),
    #[error("degenerate line fit: all timestamps identical")]
    DegenerateFit,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
