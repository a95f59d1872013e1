//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input violates a documented domain bound.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is outside its admissible set.
    #[error("config error: {0}")]
    Config(String),

    /// A text artifact could not be parsed; `line` is 1-based.
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    /// A persisted artifact does not match the expected schema or version.
    #[error("schema error: {0}")]
    Schema(String),

    /// A downstream stage was invoked before its inputs exist.
    #[error("{artifact} not found; run `mcfid {command}` first")]
    MissingArtifact { artifact: String, command: String },

    /// An artifact was produced under a different configuration or input.
    #[error("stale artifact {artifact}: {detail}; re-run `mcfid {command}`")]
    StaleArtifact {
        artifact: String,
        detail: String,
        command: String,
    },

    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
