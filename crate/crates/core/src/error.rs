use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where in an input file a parse problem was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(u64),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte {b}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("requested {k} neighbors but the cloud has only {n} points")]
    TooFewPoints { k: usize, n: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate neighborhood (all points coincide)")]
    Degenerate,

    #[error("class {0} has no training samples")]
    EmptyClass(u8),

    #[error("training diverged in run {run} at iteration {iteration}: non-finite loss")]
    NonFiniteLoss { run: usize, iteration: usize },

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupted file: {0}")]
    Corrupted(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Line(line),
            message: message.into(),
        }
    }

    pub(crate) fn parse_byte(byte: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Byte(byte),
            message: message.into(),
        }
    }
}
