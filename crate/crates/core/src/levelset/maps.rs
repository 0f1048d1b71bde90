use ndarray::{Array1, Array2, ArrayView2};

use super::{BatchMap, LatentSpace, LevelSetError};
use crate::model::{Evaluator, VaeModel};
use crate::targets::Target;

/// Map built from point closures; the latent space is the input space.
pub struct FnMap<F, G> {
    dim: usize,
    f: F,
    g: G,
}

impl<F, G> FnMap<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, f: F, g: G) -> Self {
        Self { dim, f, g }
    }
}

impl<F, G> BatchMap for FnMap<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: ArrayView2<f64>) -> Result<Array1<f64>, LevelSetError> {
        Ok(z.rows()
            .into_iter()
            .map(|r| (self.f)(&r.to_vec()))
            .collect())
    }

    fn eval_grad(&self, z: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>), LevelSetError> {
        let mut g = Array2::zeros(z.raw_dim());
        let mut v = Array1::zeros(z.nrows());
        for (i, r) in z.rows().into_iter().enumerate() {
            let p = r.to_vec();
            v[i] = (self.f)(&p);
            g.row_mut(i).assign(&Array1::from((self.g)(&p)));
        }
        Ok((v, g))
    }
}

impl<F, G> LatentSpace for FnMap<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn to_input(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, LevelSetError> {
        Ok(z.to_owned())
    }

    fn to_latent(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LevelSetError> {
        Ok(x.to_owned())
    }
}

/// A planar synthetic target as a map on the plane.
#[derive(Debug, Clone, Copy)]
pub struct TargetMap(pub Target);

impl BatchMap for TargetMap {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, z: ArrayView2<f64>) -> Result<Array1<f64>, LevelSetError> {
        super::check_dim(self, z.ncols())?;
        Ok(z.rows()
            .into_iter()
            .map(|r| self.0.eval([r[0], r[1]]))
            .collect())
    }

    fn eval_grad(&self, z: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>), LevelSetError> {
        super::check_dim(self, z.ncols())?;
        let v = self.eval(z)?;
        let g = Array2::from_shape_fn(z.raw_dim(), |(i, j)| self.0.grad([z[[i, 0]], z[[i, 1]]])[j]);
        Ok((v, g))
    }
}

impl LatentSpace for TargetMap {
    fn to_input(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, LevelSetError> {
        Ok(z.to_owned())
    }

    fn to_latent(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LevelSetError> {
        Ok(x.to_owned())
    }
}

/// Latent property `z ↦ g(f(z))` of a model, in data units, with the model's
/// decoder and encoder means as the maps to and from input space.
pub struct LatentProperty<'a, M> {
    eval: Evaluator<'a, M>,
}

impl<'a, M: VaeModel> LatentProperty<'a, M> {
    pub fn new(model: &'a M) -> Self {
        Self {
            eval: Evaluator::new(model),
        }
    }

    pub fn evaluator(&self) -> &Evaluator<'a, M> {
        &self.eval
    }
}

impl<M: VaeModel> BatchMap for LatentProperty<'_, M> {
    fn dim(&self) -> usize {
        self.eval.model().latent_dim()
    }

    fn eval(&self, z: ArrayView2<f64>) -> Result<Array1<f64>, LevelSetError> {
        Ok(self.eval.latent_property(z)?)
    }

    fn eval_grad(&self, z: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>), LevelSetError> {
        Ok(self.eval.latent_property_grad(z)?)
    }
}

impl<M: VaeModel> LatentSpace for LatentProperty<'_, M> {
    fn to_input(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, LevelSetError> {
        Ok(self.eval.decode(z)?)
    }

    fn to_latent(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LevelSetError> {
        Ok(self.eval.encode(x)?)
    }
}

/// The full property `x ↦ F(x)` of a model on its input space.
pub struct InputProperty<'a, M> {
    eval: Evaluator<'a, M>,
}

impl<'a, M: VaeModel> InputProperty<'a, M> {
    pub fn new(model: &'a M) -> Self {
        Self {
            eval: Evaluator::new(model),
        }
    }
}

impl<M: VaeModel> BatchMap for InputProperty<'_, M> {
    fn dim(&self) -> usize {
        self.eval.model().input_dim()
    }

    fn eval(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, LevelSetError> {
        Ok(self.eval.property(x)?)
    }

    fn eval_grad(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>), LevelSetError> {
        Ok(self.eval.property_grad(x)?)
    }
}
