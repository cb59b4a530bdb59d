use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("graph contains a cycle through segment {0}")]
    Cyclic(u32),

    #[error("no prediction-graph edge from segment {upstream} to segment {downstream}")]
    EdgeNotFound { upstream: u32, downstream: u32 },

    #[error("unknown segment id {0}")]
    UnknownSegment(u32),

    #[error("non-positive streamflow {value} at segment {segment}, day {day}")]
    NonPositiveFlow { segment: u32, day: usize, value: f64 },

    #[error("no simulated streamflow for unobserved cell (segment {segment}, day {day})")]
    MissingSimulated { segment: u32, day: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("checkpoint does not match inputs: {0}")]
    HashMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::NonFinite(_) | Error::NonPositiveFlow { .. } => 4,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
