use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent problem parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested enumeration or table would exceed a configured cap.
    #[error("capacity error: {what} needs {needed} entries, cap is {cap}; {hint}")]
    Capacity {
        what: &'static str,
        needed: u128,
        cap: u128,
        hint: &'static str,
    },

    /// The price model cannot do what was asked (e.g. enumerate a replay model).
    #[error("capability error: {0}")]
    Capability(String),

    /// Malformed input rows; each entry is `(line, message)`.
    #[error("ingestion error in {path}: {} bad line(s), first: line {}: {}", .lines.len(), .lines[0].0, .lines[0].1)]
    Ingestion {
        path: PathBuf,
        lines: Vec<(usize, String)>,
    },

    /// Data that is well-formed but unusable for the request.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed serialized value table.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports and FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Capacity { .. } => "capacity",
            Error::Capability(_) => "capability",
            Error::Ingestion { .. } => "ingestion",
            Error::Data(_) => "data",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
