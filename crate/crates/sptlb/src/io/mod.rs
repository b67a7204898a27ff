//! File formats: snapshots, solution files, co-operation traces, and the
//! CSV/JSON evaluation reports.
//!
//! Everything written here is deterministic for identical inputs and seed:
//! maps serialize in key order and wall-clock timings are kept out of the
//! files (they live on the in-memory types and in the optional timings
//! sidecar).

pub mod report;
pub mod snapshot;
pub mod solution;

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: expected {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("bad format marker: expected {expected:?}, found {found:?}")]
    BadFormat { expected: String, found: String },
    #[error("parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Validation(#[from] ModelError),
}

pub use snapshot::{load_snapshot, parse_snapshot, snapshot_to_string, write_snapshot};

pub(crate) fn read_file(path: impl AsRef<std::path::Path>) -> Result<String, IoError> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(
    path: impl AsRef<std::path::Path>,
    contents: &str,
) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}
