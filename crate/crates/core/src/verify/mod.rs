//! Independent oracles and probes used to check models and level sets.

mod contour;
mod probes;
mod suite;

use thiserror::Error;

use crate::diffnet::DiffError;
use crate::model::ModelError;

pub use contour::{contour_of_values, grid_values, oracle_level_points, OracleCurve};
pub use probes::{
    composition_grad_check, convexity_probe, fd_grad_check, hausdorff, multistart_stationary,
    roundtrip_error, Cluster, ConvexityProbe, StationaryReport,
};
pub use suite::{
    convexity_suite, data_box, grad_suite, invert_suite, model_multistart_suite,
    model_roundtrip_suite, multistart_suite, oracle_compare, oracle_compare_many, oracle_grid,
    oracle_suite, random_invex, spanning_levels, spherical_suite, OracleComparison, Verdict,
    RANDOM_FLOW_SCALE,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("EmptyInput: {0} needs at least one point")]
    EmptyInput(&'static str),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}
