//! Invex property models and global level-set parameterisation.
//!
//! A property model `F = g ∘ f ∘ h` composes an exactly invertible
//! autoregressive flow `h`, a strictly input-convex network `f` and a strictly
//! increasing scalar head `g`. Every stationary point of such a model is its
//! global minimum, so level sets in the flow's latent space are star-shaped
//! about that minimum and can be traced with hyperspherical coordinates and a
//! one-dimensional radius search per direction.
//!
//! Crate layout:
//!
//! * [`diffnet`]: dense-array tape autodiff and the parameterised function
//!   families (ICNN, monotone head, autoregressive flow, plain MLP).
//! * [`model`]: the invex VAE and the cycle-consistency baseline, their losses
//!   and the training loop.
//! * [`levelset`]: minimum search, spherical coordinates, radius line-search,
//!   level-set sampling and on-level interpolation.
//! * [`targets`]: synthetic ground-truth functions and grid datasets.
//! * [`verify`]: independent oracles (marching squares, Hausdorff distance,
//!   convexity and multistart probes, finite differences).
//! * [`store`]: model archives and curve export.
//! * [`cli`]: the `invex` command-line front end.

pub mod cli;
pub mod diffnet;
pub mod levelset;
pub mod model;
pub mod par;
pub mod store;
pub mod targets;
pub mod verify;

mod error;

pub use error::{Error, Result};
