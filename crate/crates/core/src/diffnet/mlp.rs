//! Plain fully-connected network used by the cycle-consistency baseline.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_cols, DiffError, Frozen, Parameterised, Tape, Unary, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
    Softplus,
    Tanh,
}

impl Activation {
    pub(crate) fn unary(self) -> Unary {
        match self {
            Activation::Relu => Unary::Relu,
            Activation::Elu => Unary::Elu,
            Activation::Softplus => Unary::Softplus,
            Activation::Tanh => Unary::Tanh,
        }
    }
}

/// Hidden layers use `activation`; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpVars {
    w: Vec<Var>,
    b: Vec<Var>,
    activation: Activation,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`, He-initialised weights.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let weights = sizes
            .windows(2)
            .map(|p| {
                let scale = (2.0 / p[0] as f64).sqrt();
                Array2::from_shape_simple_fn((p[0], p[1]), || {
                    let v: f64 = StandardNormal.sample(rng);
                    v * scale
                })
            })
            .collect();
        let biases = sizes[1..].iter().map(|&s| Array2::zeros((1, s))).collect();
        Self {
            sizes: sizes.to_vec(),
            activation,
            weights,
            biases,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        let ok = self.weights.len() + 1 == self.sizes.len()
            && self.biases.len() == self.weights.len()
            && self
                .sizes
                .windows(2)
                .zip(&self.weights)
                .all(|(p, w)| w.dim() == (p[0], p[1]))
            && self.sizes[1..]
                .iter()
                .zip(&self.biases)
                .all(|(&s, b)| b.dim() == (1, s));
        if ok {
            Ok(())
        } else {
            Err(DiffError::ShapeMismatch {
                expected: format!("layer sizes {:?}", self.sizes),
                got: "inconsistent weights".into(),
            })
        }
    }

    pub fn vars(&self, leaves: &[Var]) -> MlpVars {
        let n = self.weights.len();
        assert_eq!(leaves.len(), 2 * n, "MLP leaf count");
        MlpVars {
            w: leaves[..n].to_vec(),
            b: leaves[n..].to_vec(),
            activation: self.activation,
        }
    }

    pub fn forward(t: &mut Tape<'_>, v: &MlpVars, x: Var) -> Var {
        let n = v.w.len();
        let mut h = x;
        for i in 0..n {
            let pre = t.matmul(h, v.w[i]);
            h = t.add(pre, v.b[i]);
            if i + 1 < n {
                h = t.unary(v.activation.unary(), h);
            }
        }
        h
    }

    pub fn eval(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, DiffError> {
        check_cols(x, self.input_dim())?;
        let frozen = Frozen::new(self);
        let mut t = Tape::new();
        let leaves = frozen.bind(&mut t);
        let v = self.vars(&leaves);
        let xv = t.constant(x.to_owned());
        let out = Self::forward(&mut t, &v, xv);
        Ok(t.value(out).clone())
    }
}

impl Parameterised for Mlp {
    fn params(&self) -> Vec<&Array2<f64>> {
        self.weights.iter().chain(self.biases.iter()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn shapes_chain() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 8, 8, 2], Activation::Relu, &mut rng);
        let y = net
            .eval(array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]].view())
            .unwrap();
        assert_eq!(y.dim(), (2, 2));
        assert!(net.eval(array![[0.1, 0.2]].view()).is_err());
        assert_eq!(net.num_params(), 3 * 8 + 8 * 8 + 8 * 2 + 8 + 8 + 2);
    }
}
