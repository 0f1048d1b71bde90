use serde::{Deserialize, Serialize};

use super::{ModelError, Reencode};
use crate::diffnet::Activation;

/// Optimiser and objective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Initial KL weight β₀.
    pub beta0: f64,
    /// β is multiplied by this factor once per `beta_anneal_period` epochs.
    pub beta_anneal_factor: f64,
    pub beta_anneal_period: usize,
    /// Cycle-consistency weight γ.
    pub cycle_weight: f64,
    /// Whether the exactly bijective invex model also evaluates the cycle
    /// term. It is identically zero there up to rounding, so it is off by
    /// default.
    pub invex_cycle: bool,
    /// Inner re-encoding of the cycle paths.
    pub cycle_reencode: Reencode,
    /// Half-width of the box `[-b, b]^d_z` that cycle latents are drawn from.
    pub latent_box: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 250,
            epochs: 600,
            beta0: 1.0,
            beta_anneal_factor: 0.99,
            beta_anneal_period: 30,
            cycle_weight: 0.01,
            invex_cycle: false,
            cycle_reencode: Reencode::Mean,
            latent_box: 3.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.beta0 >= 0.0 && self.beta0.is_finite()) {
            return bad("beta0 must be non-negative");
        }
        if !(self.cycle_weight >= 0.0 && self.cycle_weight.is_finite()) {
            return bad("cycle weight must be non-negative");
        }
        if !(self.beta_anneal_factor > 0.0) || self.beta_anneal_period == 0 {
            return bad("beta annealing needs a positive factor and period");
        }
        if !(self.latent_box > 0.0) {
            return bad("latent box half-width must be positive");
        }
        Ok(())
    }

    /// `β₀ · factor^⌊epoch / period⌋`.
    pub fn beta_at(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.beta_anneal_period) as i32;
        self.beta0 * self.beta_anneal_factor.powi(steps)
    }
}

/// Architecture of the exactly bijective invex model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvexArch {
    pub dim: usize,
    pub flow_layers: usize,
    /// Hidden widths of each flow layer's conditioner (ELU).
    pub flow_hidden: Vec<usize>,
    /// Hidden widths of the ICNN (softplus).
    pub icnn_widths: Vec<usize>,
}

impl InvexArch {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            flow_layers: 4,
            flow_hidden: vec![128],
            icnn_widths: vec![512; 4],
        }
    }
}

/// Property decoder of the pseudo-bijective model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyArch {
    /// Plain MLP with the model's hidden activation.
    Mlp { hidden: Vec<usize> },
    /// Strict ICNN followed by a monotone head.
    Convex { icnn_widths: Vec<usize> },
}

/// Architecture of the cycle-consistency VAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleArch {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
    pub property: PropertyArch,
}

impl CycleArch {
    /// The baseline: 2×1024 ReLU encoder and decoder, 2×512 ReLU property
    /// decoder, two latent dimensions.
    pub fn baseline(input_dim: usize) -> Self {
        Self {
            input_dim,
            latent_dim: 2,
            encoder_hidden: vec![1024, 1024],
            decoder_hidden: vec![1024, 1024],
            activation: Activation::Relu,
            property: PropertyArch::Mlp {
                hidden: vec![512, 512],
            },
        }
    }

    /// Pseudo-bijective invex variant: baseline encoder/decoder with a
    /// 4×512 strict ICNN property decoder.
    pub fn convex(input_dim: usize) -> Self {
        Self {
            property: PropertyArch::Convex {
                icnn_widths: vec![512; 4],
            },
            ..Self::baseline(input_dim)
        }
    }
}
