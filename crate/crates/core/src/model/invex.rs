use std::borrow::Cow;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    concat_effective, seeded_rng, Evaluator, InvexArch, ModelError, ModelKind, NoiseScales,
    TargetScale, VaeModel, INIT_STREAM,
};
use crate::diffnet::{
    row, AutoregressiveFlow, FlowVars, HeadVars, Icnn, IcnnVars, MonotoneHead, Parameterised,
    Reparam, Tape, Var,
};

/// `F = g ∘ f ∘ h` inside a VAE whose encoder is `h` and decoder is `h⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvexModel {
    arch: InvexArch,
    flow: AutoregressiveFlow,
    icnn: Icnn,
    head: MonotoneHead,
    noise: NoiseScales,
    target: TargetScale,
}

#[derive(Debug, Clone)]
pub struct InvexVars {
    pub flow: FlowVars,
    pub icnn: IcnnVars,
    pub head: HeadVars,
}

impl InvexModel {
    /// Fresh model: identity flow, random ICNN, head `a = 1, b = 1`.
    pub fn new(arch: InvexArch, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, INIT_STREAM);
        let flow = AutoregressiveFlow::new(arch.dim, &arch.flow_hidden, arch.flow_layers, &mut rng);
        let icnn = Icnn::new(arch.dim, &arch.icnn_widths, &mut rng);
        Self {
            arch,
            flow,
            icnn,
            head: MonotoneHead::new(1.0, 1.0),
            noise: NoiseScales::default(),
            target: TargetScale::default(),
        }
    }

    /// Assembles a model from existing parts; the architecture is read off them.
    pub fn from_parts(
        flow: AutoregressiveFlow,
        icnn: Icnn,
        head: MonotoneHead,
    ) -> Result<Self, ModelError> {
        if flow.dim() != icnn.input_dim() {
            return Err(ModelError::InvalidConfig(format!(
                "flow dimension {} differs from ICNN input {}",
                flow.dim(),
                icnn.input_dim()
            )));
        }
        let arch = InvexArch {
            dim: flow.dim(),
            flow_layers: flow.num_layers(),
            flow_hidden: flow.hidden().to_vec(),
            icnn_widths: icnn.widths().to_vec(),
        };
        let m = Self {
            arch,
            flow,
            icnn,
            head,
            noise: NoiseScales::default(),
            target: TargetScale::default(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn arch(&self) -> &InvexArch {
        &self.arch
    }

    pub fn flow(&self) -> &AutoregressiveFlow {
        &self.flow
    }

    pub fn icnn(&self) -> &Icnn {
        &self.icnn
    }

    pub fn head(&self) -> &MonotoneHead {
        &self.head
    }

    pub fn noise_mut(&mut self) -> &mut NoiseScales {
        &mut self.noise
    }

    /// `F(x)` in data units.
    pub fn invex_property(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(Evaluator::new(self).property(row(x).view())?[0])
    }
}

impl Parameterised for InvexModel {
    fn params(&self) -> Vec<&Array2<f64>> {
        let mut p = self.flow.params();
        p.extend(self.icnn.params());
        p.extend(self.head.params());
        p.extend(self.noise.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p = self.flow.params_mut();
        p.extend(self.icnn.params_mut());
        p.extend(self.head.params_mut());
        p.extend(self.noise.params_mut());
        p
    }

    fn reparams(&self) -> Vec<Reparam> {
        let mut r = self.flow.reparams();
        r.extend(self.icnn.reparams());
        r.extend(self.head.reparams());
        r.extend(self.noise.reparams());
        r
    }

    fn effective(&self) -> Vec<Cow<'_, Array2<f64>>> {
        concat_effective(vec![
            self.flow.effective(),
            self.icnn.effective(),
            self.head.effective(),
            self.noise.effective(),
        ])
    }
}

impl VaeModel for InvexModel {
    type Vars = InvexVars;

    fn kind(&self) -> ModelKind {
        ModelKind::Invex
    }

    fn input_dim(&self) -> usize {
        self.arch.dim
    }

    fn latent_dim(&self) -> usize {
        self.arch.dim
    }

    fn exact_inverse(&self) -> bool {
        true
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

    fn bind_vars(&self, leaves: &[Var]) -> InvexVars {
        let nf = self.flow.params().len();
        let ni = self.icnn.params().len();
        InvexVars {
            flow: self.flow.vars(&leaves[..nf]),
            icnn: self.icnn.vars(&leaves[nf..nf + ni]),
            head: self.head.vars(&leaves[nf + ni..nf + ni + 2]),
        }
    }

    fn encode_mean(&self, t: &mut Tape<'_>, v: &InvexVars, x: Var) -> Var {
        AutoregressiveFlow::forward(t, &v.flow, x)
    }

    fn decode_mean(&self, t: &mut Tape<'_>, v: &InvexVars, z: Var) -> Var {
        AutoregressiveFlow::inverse(t, &v.flow, z)
    }

    fn property(&self, t: &mut Tape<'_>, v: &InvexVars, z: Var) -> Var {
        let f = Icnn::forward(t, &v.icnn, z);
        MonotoneHead::forward(t, v.head, f)
    }

    fn validate(&self) -> Result<(), ModelError> {
        self.flow.validate()?;
        self.icnn.validate()?;
        if self.flow.dim() != self.icnn.input_dim() || self.arch.dim != self.flow.dim() {
            return Err(ModelError::InvalidConfig(
                "flow and ICNN dimensions disagree".into(),
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

    fn small() -> InvexModel {
        InvexModel::new(
            InvexArch {
                dim: 2,
                flow_layers: 4,
                flow_hidden: vec![16],
                icnn_widths: vec![8, 8],
            },
            3,
        )
    }

    #[test]
    fn leaf_split_covers_everything() {
        let m = small();
        assert_eq!(m.params().len(), m.reparams().len());
        assert_eq!(m.effective().len(), m.params().len());
    }

    #[test]
    fn fresh_flow_is_identity() {
        let m = small();
        let ev = Evaluator::new(&m);
        let x = ndarray::array![[0.3, -0.2], [1.5, 2.0]];
        let z = ev.encode(x.view()).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn same_seed_same_model() {
        assert_eq!(small(), small());
    }
}
