//! Property models, their variational objective and the training loop.
//!
//! Two model families share one interface, [`VaeModel`]:
//!
//! * [`InvexModel`]: the encoder is an exactly invertible flow `h`, the
//!   decoder is `h⁻¹`, and the property decoder is `g ∘ f` with `f` a strictly
//!   convex ICNN and `g` strictly increasing.
//! * [`CycleVae`]: MLP encoder and decoder whose mutual inversion is only
//!   encouraged through a cycle-consistency penalty.
//!
//! Property decoders work on standardised targets; [`TargetScale`] maps them
//! back to data units.

mod adam;
mod config;
mod cycle;
mod dataset;
mod eval;
mod invex;
mod loss;
mod train;

use std::borrow::Cow;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffnet::{softplus, softplus_inv, DiffError, Parameterised, Reparam, Tape, Var};

pub use adam::Adam;
pub use config::{CycleArch, InvexArch, PropertyArch, TrainConfig};
pub use cycle::{CycleVae, CycleVars, PropertyDecoder};
pub use dataset::LabelledDataset;
pub use eval::Evaluator;
pub use invex::{InvexModel, InvexVars};
pub use loss::{
    cycle_loss, encode_sample, loss_and_grads, total_loss, vae_loss, Batch, LossBreakdown,
    LossOptions, Reencode,
};
pub use train::{property_mse, train, train_kind, train_observed, EpochRow, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("EmptyBatch: loss needs at least one sample")]
    EmptyBatch,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("Dataset: {0}")]
    Dataset(String),
    #[error("Divergence: non-finite {term} loss at epoch {epoch}")]
    Divergence { epoch: usize, term: &'static str },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Which family a model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Invex,
    CycleBaseline,
    CycleInvex,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Invex => "invex",
            ModelKind::CycleBaseline => "cycle-baseline",
            ModelKind::CycleInvex => "cycle-invex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Invex, Self::CycleBaseline, Self::CycleInvex]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// Affine map between standardised and data units of the property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl Default for TargetScale {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }
}

impl TargetScale {
    /// Mean and population standard deviation; a constant target keeps unit scale.
    pub fn fit(y: &[f64]) -> Self {
        if y.is_empty() {
            return Self::default();
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn to_standard(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn to_data(&self, s: f64) -> f64 {
        self.mean + self.std * s
    }
}

/// Trainable scalar scales `σ_z, σ_x, σ_y`, stored raw behind softplus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales {
    raw_z: Array2<f64>,
    raw_x: Array2<f64>,
    raw_y: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseVars {
    pub sigma_z: Var,
    pub sigma_x: Var,
    pub sigma_y: Var,
}

impl NoiseScales {
    pub fn new(sigma_z: f64, sigma_x: f64, sigma_y: f64) -> Self {
        let cell = |s: f64| Array2::from_elem((1, 1), softplus_inv(s));
        Self {
            raw_z: cell(sigma_z),
            raw_x: cell(sigma_x),
            raw_y: cell(sigma_y),
        }
    }

    /// Effective `(σ_z, σ_x, σ_y)`.
    pub fn sigmas(&self) -> (f64, f64, f64) {
        (
            softplus(self.raw_z[[0, 0]]),
            softplus(self.raw_x[[0, 0]]),
            softplus(self.raw_y[[0, 0]]),
        )
    }

    pub fn vars(leaves: &[Var]) -> NoiseVars {
        assert_eq!(leaves.len(), 3, "noise leaf count");
        NoiseVars {
            sigma_z: leaves[0],
            sigma_x: leaves[1],
            sigma_y: leaves[2],
        }
    }
}

impl Default for NoiseScales {
    fn default() -> Self {
        Self::new(0.1, 0.1, 0.1)
    }
}

impl Parameterised for NoiseScales {
    fn params(&self) -> Vec<&Array2<f64>> {
        vec![&self.raw_z, &self.raw_x, &self.raw_y]
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.raw_z, &mut self.raw_x, &mut self.raw_y]
    }

    fn reparams(&self) -> Vec<Reparam> {
        vec![Reparam::Softplus; 3]
    }
}

/// Common interface of the trainable property models.
///
/// Parameter order is the model's networks followed by the three
/// [`NoiseScales`] arrays, which always come last.
pub trait VaeModel: Parameterised + Sync {
    type Vars;

    fn kind(&self) -> ModelKind;
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    /// True when the decoder mean is the exact inverse of the encoder mean.
    fn exact_inverse(&self) -> bool;
    fn noise(&self) -> &NoiseScales;
    fn target_scale(&self) -> TargetScale;
    fn set_target_scale(&mut self, scale: TargetScale);

    /// Splits the network leaves (everything but the noise scales).
    fn bind_vars(&self, leaves: &[Var]) -> Self::Vars;
    fn encode_mean(&self, t: &mut Tape<'_>, v: &Self::Vars, x: Var) -> Var;
    fn decode_mean(&self, t: &mut Tape<'_>, v: &Self::Vars, z: Var) -> Var;
    /// Standardised property prediction from latents, `B × 1`.
    fn property(&self, t: &mut Tape<'_>, v: &Self::Vars, z: Var) -> Var;

    fn validate(&self) -> Result<(), ModelError>;
}

/// Binds a model's leaves, returning network vars and noise vars.
pub(crate) fn split_leaves<M: VaeModel>(model: &M, leaves: &[Var]) -> (M::Vars, NoiseVars) {
    let n = leaves.len();
    (
        model.bind_vars(&leaves[..n - 3]),
        NoiseScales::vars(&leaves[n - 3..]),
    )
}

/// Concatenates parameter lists of several sub-networks.
pub(crate) fn concat_effective<'a>(
    parts: Vec<Vec<Cow<'a, Array2<f64>>>>,
) -> Vec<Cow<'a, Array2<f64>>> {
    parts.into_iter().flatten().collect()
}

/// A trained model of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum AnyModel {
    Invex(InvexModel),
    Cycle(CycleVae),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Invex(m) => m.kind(),
            AnyModel::Cycle(m) => m.kind(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            AnyModel::Invex(m) => m.input_dim(),
            AnyModel::Cycle(m) => m.input_dim(),
        }
    }

    /// Property predictions in data units.
    pub fn predict(&self, x: ndarray::ArrayView2<f64>) -> Result<ndarray::Array1<f64>, ModelError> {
        match self {
            AnyModel::Invex(m) => Evaluator::new(m).property(x),
            AnyModel::Cycle(m) => Evaluator::new(m).property(x),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            AnyModel::Invex(m) => m.validate(),
            AnyModel::Cycle(m) => m.validate(),
        }
    }
}

/// Initialisation and training draw from separate streams of one seed.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const INIT_STREAM: u64 = 0;
pub(crate) const TRAIN_STREAM: u64 = 1;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_scales_start_at_one_tenth() {
        let (z, x, y) = NoiseScales::default().sigmas();
        for s in [z, x, y] {
            assert!((s - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn target_scale_round_trip() {
        let s = TargetScale::fit(&[1.0, 2.0, 3.0, 6.0]);
        assert!((s.mean - 3.0).abs() < 1e-15);
        for v in [-1.0, 0.0, 7.5] {
            assert!((s.to_data(s.to_standard(v)) - v).abs() < 1e-14);
        }
        assert_eq!(TargetScale::fit(&[2.0, 2.0]).std, 1.0);
    }

    #[test]
    fn kind_names_parse() {
        for k in [
            ModelKind::Invex,
            ModelKind::CycleBaseline,
            ModelKind::CycleInvex,
        ] {
            assert_eq!(ModelKind::parse(k.name()), Some(k));
        }
        assert_eq!(ModelKind::parse("nope"), None);
    }
}
