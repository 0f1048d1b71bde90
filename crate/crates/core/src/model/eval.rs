use std::borrow::Cow;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use super::{ModelError, VaeModel};
use crate::diffnet::{check_cols, check_finite, Tape, Var};
use crate::par;

const EVAL_CHUNK: usize = 256;

/// Frozen evaluation of a model's means and property maps.
///
/// Effective weights are computed once; batches are split into fixed chunks
/// that are evaluated independently and concatenated in order.
pub struct Evaluator<'a, M> {
    model: &'a M,
    effective: Vec<Cow<'a, Array2<f64>>>,
}

impl<'a, M: VaeModel> Evaluator<'a, M> {
    pub fn new(model: &'a M) -> Self {
        Self {
            model,
            effective: model.effective(),
        }
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    fn run<F>(
        &self,
        input: ArrayView2<f64>,
        cols: usize,
        grad: bool,
        f: F,
    ) -> Result<(Array2<f64>, Option<Array2<f64>>), ModelError>
    where
        F: for<'t> Fn(&M, &mut Tape<'t>, &M::Vars, Var) -> Var + Sync + Send,
    {
        check_cols(input, cols)?;
        check_finite(input, "input")?;
        let parts = par::map_chunks(input.nrows(), EVAL_CHUNK, |r| {
            let mut t = Tape::new();
            let leaves: Vec<Var> = self
                .effective
                .iter()
                .map(|e| t.constant_ref(e.as_ref()))
                .collect();
            let n = leaves.len();
            let v = self.model.bind_vars(&leaves[..n - 3]);
            let chunk = input.slice(ndarray::s![r, ..]).to_owned();
            let iv = if grad {
                t.variable(chunk)
            } else {
                t.constant(chunk)
            };
            let out = f(self.model, &mut t, &v, iv);
            let g = grad.then(|| t.backward(out).wrt(iv));
            (t.value(out).clone(), g)
        });
        let values = stack(
            parts.iter().map(|p| p.0.view()).collect(),
            f_out_cols(&parts),
        )?;
        let grads = if grad {
            Some(stack(
                parts
                    .iter()
                    .filter_map(|p| p.1.as_ref().map(|g| g.view()))
                    .collect(),
                cols,
            )?)
        } else {
            None
        };
        Ok((values, grads))
    }

    /// Encoder means `μ_z(x)`.
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        Ok(self
            .run(x, self.model.input_dim(), false, |m, t, v, x| {
                m.encode_mean(t, v, x)
            })?
            .0)
    }

    /// Decoder means `μ_x(z)`.
    pub fn decode(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        Ok(self
            .run(z, self.model.latent_dim(), false, |m, t, v, z| {
                m.decode_mean(t, v, z)
            })?
            .0)
    }

    /// Property of latents in data units.
    pub fn latent_property(&self, z: ArrayView2<f64>) -> Result<Array1<f64>, ModelError> {
        let (v, _) = self.run(z, self.model.latent_dim(), false, |m, t, v, z| {
            m.property(t, v, z)
        })?;
        Ok(self.to_data(v))
    }

    /// Latent property and its gradient, both in data units.
    pub fn latent_property_grad(
        &self,
        z: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>), ModelError> {
        let (v, g) = self.run(z, self.model.latent_dim(), true, |m, t, v, z| {
            m.property(t, v, z)
        })?;
        let std = self.model.target_scale().std;
        Ok((self.to_data(v), g.expect("gradient requested") * std))
    }

    /// `F(x)`: property of encoded inputs in data units.
    pub fn property(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, ModelError> {
        let (v, _) = self.run(x, self.model.input_dim(), false, full)?;
        Ok(self.to_data(v))
    }

    /// `F(x)` and `∇F(x)` in data units.
    pub fn property_grad(
        &self,
        x: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>), ModelError> {
        let (v, g) = self.run(x, self.model.input_dim(), true, full)?;
        let std = self.model.target_scale().std;
        Ok((self.to_data(v), g.expect("gradient requested") * std))
    }

    fn to_data(&self, standard: Array2<f64>) -> Array1<f64> {
        let s = self.model.target_scale();
        standard.column(0).mapv(|v| s.to_data(v))
    }
}

fn full<M: VaeModel>(m: &M, t: &mut Tape<'_>, v: &M::Vars, x: Var) -> Var {
    let z = m.encode_mean(t, v, x);
    m.property(t, v, z)
}

fn f_out_cols(parts: &[(Array2<f64>, Option<Array2<f64>>)]) -> usize {
    parts.first().map_or(0, |p| p.0.ncols())
}

fn stack(views: Vec<ArrayView2<'_, f64>>, cols: usize) -> Result<Array2<f64>, ModelError> {
    if views.is_empty() {
        return Ok(Array2::zeros((0, cols)));
    }
    concatenate(Axis(0), &views).map_err(|e| ModelError::InvalidConfig(e.to_string()))
}
