use thiserror::Error;

use crate::diffnet::DiffError;
use crate::levelset::LevelSetError;
use crate::model::ModelError;
use crate::store::StoreError;
use crate::verify::VerifyError;

/// Crate-level error wrapping the per-module failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
