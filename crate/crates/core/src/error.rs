//! Simulation error types.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// A config value is outside its documented range.
    #[error("config error: key '{key}': {reason}")]
    Config { key: String, reason: String },

    /// The config document itself could not be parsed (malformed JSON,
    /// unknown key, wrong type).
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// Placement rejection sampling exhausted its attempt budget.
    #[error("configuration infeasible: {0}")]
    InfeasiblePlacement(String),

    /// Degenerate heatmap grid.
    #[error("heatmap resolution {0} is below the minimum of 2")]
    Resolution(usize),

    /// A file read/write failed.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A stored Q-table or trace file did not match the documented format.
    #[error("parse error in {}, line {line}: {reason}", path.display())]
    FileFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config { key: key.into(), reason: reason.into() }
    }
}
