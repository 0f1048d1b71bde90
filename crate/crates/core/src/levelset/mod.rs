//! Level sets of invex maps in latent space.
//!
//! A strictly quasi-convex map has a unique minimiser `z*` and is strictly
//! increasing along every ray leaving it, so each level set above the minimum
//! is the graph of a radius function over directions. Directions are written
//! in hyperspherical coordinates about `z*`; the radius for a direction is
//! found by bracketing and bisection.
//!
//! A trained map need not attain its infimum. It is then minimised over a
//! compact latent box instead, and only the part of each level set inside
//! that box is parameterised.

mod maps;
mod minimize;
mod radius;
mod sample;
mod spherical;

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

use crate::diffnet::row;
use crate::model::ModelError;

pub use maps::{FnMap, InputProperty, LatentProperty, TargetMap};
pub use minimize::{
    find_minimum, find_minimum_box, minimize_many, MinStatus, MinimizeOptions, MinimumResult,
    SubspaceBox,
};
pub use radius::{
    level_reachable, radius_search, radius_search_each, radius_search_many, Center, RadiusHit,
    RadiusOptions, Reachability,
};
pub use sample::{
    latent_domain, levelset_interpolate, levelset_interpolate_latent, levelset_sample,
    region_center, LatitudePolicy, LevelPoint, LevelSetPath, DOMAIN_MARGIN,
};
pub use spherical::{
    cart_to_sph, direction, normalise_angle, shortest_arc, sph_to_cart, SphericalPoint,
};

#[derive(Debug, Error)]
pub enum LevelSetError {
    #[error("LevelNotReachable: level {alpha} does not exceed the minimum value {minimum}")]
    LevelNotReachable { alpha: f64, minimum: f64 },
    #[error("LevelBeyondRange: level {alpha} not bracketed within radius {r_max}")]
    LevelBeyondRange { alpha: f64, r_max: f64 },
    #[error("OutsideSubspace: level {alpha} not reached before the ray leaves the subspace at radius {radius}")]
    OutsideSubspace { alpha: f64, radius: f64 },
    #[error(
        "NonConvergence: {what} stopped after {iterations} iterations (residual {residual:e})"
    )]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("Unbounded: minimum search moved further than {radius} from its start after {iterations} iterations; the map may not attain its infimum")]
    Unbounded { radius: f64, iterations: usize },
    #[error("NotOnLevel: endpoint value {value} is further than {tol:e} from level {alpha}")]
    NotOnLevel { value: f64, alpha: f64, tol: f64 },
    #[error("InvalidQuery: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A scalar map evaluated on batches of points, one per row.
pub trait BatchMap: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: ArrayView2<f64>) -> Result<Array1<f64>, LevelSetError>;
    /// Values and gradients (one gradient row per point).
    fn eval_grad(&self, z: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>), LevelSetError>;

    fn value_at(&self, z: &[f64]) -> Result<f64, LevelSetError> {
        Ok(self.eval(row(z).view())?[0])
    }

    fn grad_at(&self, z: &[f64]) -> Result<(f64, Vec<f64>), LevelSetError> {
        let (v, g) = self.eval_grad(row(z).view())?;
        Ok((v[0], g.row(0).to_vec()))
    }
}

/// A map on a latent space that is tied to an input space by a bijection.
pub trait LatentSpace: BatchMap {
    fn to_input(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, LevelSetError>;
    fn to_latent(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LevelSetError>;
}

fn check_dim(map: &dyn BatchMap, got: usize) -> Result<(), LevelSetError> {
    if got == map.dim() {
        Ok(())
    } else {
        Err(LevelSetError::InvalidQuery(format!(
            "point has {got} coordinates, map expects {}",
            map.dim()
        )))
    }
}
