use std::borrow::Cow;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    concat_effective, seeded_rng, CycleArch, ModelError, ModelKind, NoiseScales, PropertyArch,
    TargetScale, VaeModel, INIT_STREAM,
};
use crate::diffnet::{
    HeadVars, Icnn, IcnnVars, Mlp, MlpVars, MonotoneHead, Parameterised, Reparam, Tape, Var,
};

/// Pseudo-bijective VAE: the decoder only approximates the encoder inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleVae {
    arch: CycleArch,
    encoder: Mlp,
    decoder: Mlp,
    property: PropertyDecoder,
    noise: NoiseScales,
    target: TargetScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyDecoder {
    Mlp(Mlp),
    Convex { icnn: Icnn, head: MonotoneHead },
}

#[derive(Debug, Clone)]
pub enum PropertyVars {
    Mlp(MlpVars),
    Convex { icnn: IcnnVars, head: HeadVars },
}

#[derive(Debug, Clone)]
pub struct CycleVars {
    pub encoder: MlpVars,
    pub decoder: MlpVars,
    pub property: PropertyVars,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl PropertyDecoder {
    fn params(&self) -> Vec<&Array2<f64>> {
        match self {
            PropertyDecoder::Mlp(m) => m.params(),
            PropertyDecoder::Convex { icnn, head } => {
                let mut p = icnn.params();
                p.extend(head.params());
                p
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            PropertyDecoder::Mlp(m) => m.params_mut(),
            PropertyDecoder::Convex { icnn, head } => {
                let mut p = icnn.params_mut();
                p.extend(head.params_mut());
                p
            }
        }
    }

    fn reparams(&self) -> Vec<Reparam> {
        match self {
            PropertyDecoder::Mlp(m) => m.reparams(),
            PropertyDecoder::Convex { icnn, head } => {
                let mut r = icnn.reparams();
                r.extend(head.reparams());
                r
            }
        }
    }

    fn effective(&self) -> Vec<Cow<'_, Array2<f64>>> {
        match self {
            PropertyDecoder::Mlp(m) => m.effective(),
            PropertyDecoder::Convex { icnn, head } => {
                concat_effective(vec![icnn.effective(), head.effective()])
            }
        }
    }

    fn vars(&self, leaves: &[Var]) -> PropertyVars {
        match self {
            PropertyDecoder::Mlp(m) => PropertyVars::Mlp(m.vars(leaves)),
            PropertyDecoder::Convex { icnn, head } => {
                let n = icnn.params().len();
                PropertyVars::Convex {
                    icnn: icnn.vars(&leaves[..n]),
                    head: head.vars(&leaves[n..]),
                }
            }
        }
    }
}

impl CycleVae {
    pub fn new(arch: CycleArch, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, INIT_STREAM);
        let (d, dz) = (arch.input_dim, arch.latent_dim);
        let encoder = Mlp::new(
            &sizes(d, &arch.encoder_hidden, dz),
            arch.activation,
            &mut rng,
        );
        let decoder = Mlp::new(
            &sizes(dz, &arch.decoder_hidden, d),
            arch.activation,
            &mut rng,
        );
        let property = match &arch.property {
            PropertyArch::Mlp { hidden } => {
                PropertyDecoder::Mlp(Mlp::new(&sizes(dz, hidden, 1), arch.activation, &mut rng))
            }
            PropertyArch::Convex { icnn_widths } => PropertyDecoder::Convex {
                icnn: Icnn::new(dz, icnn_widths, &mut rng),
                head: MonotoneHead::new(1.0, 1.0),
            },
        };
        Self {
            arch,
            encoder,
            decoder,
            property,
            noise: NoiseScales::default(),
            target: TargetScale::default(),
        }
    }

    pub fn arch(&self) -> &CycleArch {
        &self.arch
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn property_decoder(&self) -> &PropertyDecoder {
        &self.property
    }

    /// The convex property network, if this is the pseudo-bijective variant.
    pub fn icnn(&self) -> Option<&Icnn> {
        match &self.property {
            PropertyDecoder::Convex { icnn, .. } => Some(icnn),
            PropertyDecoder::Mlp(_) => None,
        }
    }

    pub fn noise_mut(&mut self) -> &mut NoiseScales {
        &mut self.noise
    }
}

impl Parameterised for CycleVae {
    fn params(&self) -> Vec<&Array2<f64>> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p.extend(self.property.params());
        p.extend(self.noise.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p.extend(self.property.params_mut());
        p.extend(self.noise.params_mut());
        p
    }

    fn reparams(&self) -> Vec<Reparam> {
        let mut r = self.encoder.reparams();
        r.extend(self.decoder.reparams());
        r.extend(self.property.reparams());
        r.extend(self.noise.reparams());
        r
    }

    fn effective(&self) -> Vec<Cow<'_, Array2<f64>>> {
        concat_effective(vec![
            self.encoder.effective(),
            self.decoder.effective(),
            self.property.effective(),
            self.noise.effective(),
        ])
    }
}

impl VaeModel for CycleVae {
    type Vars = CycleVars;

    fn kind(&self) -> ModelKind {
        match self.property {
            PropertyDecoder::Mlp(_) => ModelKind::CycleBaseline,
            PropertyDecoder::Convex { .. } => ModelKind::CycleInvex,
        }
    }

    fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    fn exact_inverse(&self) -> bool {
        false
    }

    fn noise(&self) -> &NoiseScales {
        &self.noise
    }

    fn target_scale(&self) -> TargetScale {
        self.target
    }

    fn set_target_scale(&mut self, scale: TargetScale) {
        self.target = scale;
    }

    fn bind_vars(&self, leaves: &[Var]) -> CycleVars {
        let ne = self.encoder.params().len();
        let nd = self.decoder.params().len();
        CycleVars {
            encoder: self.encoder.vars(&leaves[..ne]),
            decoder: self.decoder.vars(&leaves[ne..ne + nd]),
            property: self.property.vars(&leaves[ne + nd..]),
        }
    }

    fn encode_mean(&self, t: &mut Tape<'_>, v: &CycleVars, x: Var) -> Var {
        Mlp::forward(t, &v.encoder, x)
    }

    fn decode_mean(&self, t: &mut Tape<'_>, v: &CycleVars, z: Var) -> Var {
        Mlp::forward(t, &v.decoder, z)
    }

    fn property(&self, t: &mut Tape<'_>, v: &CycleVars, z: Var) -> Var {
        match &v.property {
            PropertyVars::Mlp(m) => Mlp::forward(t, m, z),
            PropertyVars::Convex { icnn, head } => {
                let f = Icnn::forward(t, icnn, z);
                MonotoneHead::forward(t, *head, f)
            }
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        let (d, dz) = (self.arch.input_dim, self.arch.latent_dim);
        let mut ok = self.encoder.input_dim() == d
            && self.encoder.output_dim() == dz
            && self.decoder.input_dim() == dz
            && self.decoder.output_dim() == d;
        match &self.property {
            PropertyDecoder::Mlp(m) => {
                m.validate()?;
                ok &= m.input_dim() == dz && m.output_dim() == 1;
            }
            PropertyDecoder::Convex { icnn, .. } => {
                icnn.validate()?;
                ok &= icnn.input_dim() == dz;
            }
        }
        if !ok {
            return Err(ModelError::InvalidConfig(
                "network sizes do not chain".into(),
            ));
        }
        if !(self.target.std > 0.0 && self.target.std.is_finite() && self.target.mean.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "target scale must be finite with positive spread".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Activation;

    fn tiny(convex: bool) -> CycleArch {
        CycleArch {
            input_dim: 2,
            latent_dim: 2,
            encoder_hidden: vec![8],
            decoder_hidden: vec![8],
            activation: Activation::Relu,
            property: if convex {
                PropertyArch::Convex {
                    icnn_widths: vec![6, 6],
                }
            } else {
                PropertyArch::Mlp { hidden: vec![5] }
            },
        }
    }

    #[test]
    fn kinds_follow_property_decoder() {
        assert_eq!(
            CycleVae::new(tiny(false), 0).kind(),
            ModelKind::CycleBaseline
        );
        assert_eq!(CycleVae::new(tiny(true), 0).kind(), ModelKind::CycleInvex);
    }

    #[test]
    fn validates() {
        CycleVae::new(tiny(false), 0).validate().unwrap();
        CycleVae::new(tiny(true), 0).validate().unwrap();
        CycleVae::new(CycleArch::baseline(2), 0).validate().unwrap();
    }
}
