//! Model archives and curve export.

mod archive;
mod curve;

use std::path::PathBuf;

use thiserror::Error;

pub use archive::{load_model, save_model, ModelArchive, FORMAT_VERSION};
pub use curve::{curve_header, export_curve, export_svg, import_curve};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("VersionMismatch: archive format {found}, this build reads {expected}")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("Malformed: {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("MissingField: {path}: {field}")]
    MissingField { path: PathBuf, field: String },
    #[error("EmptyCurve: nothing to export")]
    EmptyCurve,
    #[error("Io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl StoreError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn malformed(path: &std::path::Path, reason: impl ToString) -> Self {
        StoreError::Malformed {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}
