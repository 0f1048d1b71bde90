//! Dense-array math, the reverse-mode tape, and the parameterised function
//! families used by the property models.
//!
//! Batches are `Array2<f64>` with one sample per row. Networks store raw
//! parameters; constrained ones are mapped through a [`Reparam`] (softplus
//! for positivity, a fixed mask for autoregressive connectivity) to the
//! effective weights the forward pass uses. Effective weights are computed
//! once per parameter state and bound to a tape either as differentiable
//! leaves ([`bind_params`]) or as constants ([`Frozen`]); gradients with
//! respect to effective weights are pulled back to raw parameters with
//! [`Parameterised::raw_grads`].

mod flow;
mod icnn;
mod mlp;
mod monotone;
pub mod tape;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use std::borrow::Cow;

pub use flow::{AutoregressiveFlow, FlowVars, CONDITIONER_ACTIVATION};
pub use icnn::{Icnn, IcnnVars, HIDDEN_ACTIVATION as ICNN_ACTIVATION};
pub use mlp::{Activation, Mlp, MlpVars};
pub use monotone::{HeadVars, MonotoneHead};
pub use tape::{Grads, Tape, Unary, Var};

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("ShapeMismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("NonFinite: non-finite value in {0}")]
    NonFinite(&'static str),
}

/// `ln(1 + eˣ)`, evaluated without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Positivity reparameterisation applied to constrained raw weights.
pub fn reparam_positive(raw: f64) -> f64 {
    softplus(raw)
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0, "softplus_inv needs a positive argument");
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

/// Rejects NaN and infinite entries.
pub fn check_finite(a: ArrayView2<f64>, what: &'static str) -> Result<(), DiffError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DiffError::NonFinite(what))
    }
}

pub(crate) fn check_cols(a: ArrayView2<f64>, cols: usize) -> Result<(), DiffError> {
    if a.ncols() == cols {
        Ok(())
    } else {
        Err(DiffError::ShapeMismatch {
            expected: format!("{cols} columns"),
            got: format!("{} columns", a.ncols()),
        })
    }
}

/// Map from a raw parameter array to the effective array used in the
/// forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Reparam {
    Identity,
    /// Elementwise softplus, strictly positive.
    Softplus,
    /// Elementwise product with a fixed 0/1 connectivity mask.
    Mask(Array2<f64>),
}

impl Reparam {
    pub fn apply<'a>(&self, raw: &'a Array2<f64>) -> Cow<'a, Array2<f64>> {
        match self {
            Reparam::Identity => Cow::Borrowed(raw),
            Reparam::Softplus => Cow::Owned(raw.mapv(softplus)),
            Reparam::Mask(m) => Cow::Owned(raw * m),
        }
    }

    /// Pulls a cotangent on the effective array back to the raw array.
    pub fn pullback(&self, raw: &Array2<f64>, mut g: Array2<f64>) -> Array2<f64> {
        match self {
            Reparam::Identity => g,
            Reparam::Softplus => {
                ndarray::Zip::from(&mut g)
                    .and(raw)
                    .for_each(|g, &r| *g *= tape::sigmoid(r));
                g
            }
            Reparam::Mask(m) => g * m,
        }
    }
}

/// A network with an ordered list of trainable raw parameter arrays.
pub trait Parameterised {
    fn params(&self) -> Vec<&Array2<f64>>;
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>>;

    /// One entry per array of [`params`](Self::params).
    fn reparams(&self) -> Vec<Reparam> {
        vec![Reparam::Identity; self.params().len()]
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Effective arrays, in parameter order.
    fn effective(&self) -> Vec<Cow<'_, Array2<f64>>> {
        self.params()
            .into_iter()
            .zip(self.reparams())
            .map(|(p, r)| r.apply(p))
            .collect()
    }

    /// Converts gradients on effective arrays into gradients on raw arrays.
    fn raw_grads(&self, effective_grads: Vec<Array2<f64>>) -> Vec<Array2<f64>> {
        self.params()
            .into_iter()
            .zip(self.reparams())
            .zip(effective_grads)
            .map(|((p, r), g)| r.pullback(p, g))
            .collect()
    }
}

/// Binds effective arrays as differentiable leaves.
pub fn bind_params<'a>(t: &mut Tape<'a>, effective: &'a [Cow<'a, Array2<f64>>]) -> Vec<Var> {
    effective.iter().map(|e| t.param(e.as_ref())).collect()
}

/// Effective weights of a network, cached for repeated constant evaluation.
pub struct Frozen<'a, P> {
    net: &'a P,
    effective: Vec<Cow<'a, Array2<f64>>>,
}

impl<'a, P: Parameterised> Frozen<'a, P> {
    pub fn new(net: &'a P) -> Self {
        Self {
            net,
            effective: net.effective(),
        }
    }

    pub fn net(&self) -> &'a P {
        self.net
    }

    pub fn effective(&self) -> &[Cow<'a, Array2<f64>>] {
        &self.effective
    }

    /// Binds every effective array as a borrowed constant.
    pub fn bind<'t>(&'t self, t: &mut Tape<'t>) -> Vec<Var> {
        self.effective
            .iter()
            .map(|e| t.constant_ref(e.as_ref()))
            .collect()
    }
}

/// One row holding `point`, the batch shape used for single-point calls.
pub(crate) fn row(point: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, point.len()), point.to_vec()).expect("row shape")
}
