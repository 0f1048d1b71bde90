//! Affine autoregressive flow with masked (MADE) conditioners.
//!
//! Each layer maps `x ↦ y` with `y_j = x_j·exp(s_j(x_<j)) + μ_j(x_<j)` and
//! then reverses the coordinate order. The conditioner is a masked MLP with
//! ELU hidden units; its output row is `[μ_1..μ_d, s_1..s_d]`. Because
//! `exp(s) > 0` every layer is a global bijection, and the inverse is solved
//! one coordinate at a time.
//!
//! The conditioner output layer starts at zero, so every layer starts as the
//! identity and an even number of reversals cancels.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_cols, Activation, DiffError, Frozen, Parameterised, Reparam, Tape, Var};

/// Hidden-unit nonlinearity of every conditioner.
pub const CONDITIONER_ACTIVATION: Activation = Activation::Elu;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MadeLayer {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoregressiveFlow {
    dim: usize,
    hidden: Vec<usize>,
    layers: Vec<MadeLayer>,
}

#[derive(Debug, Clone)]
struct LayerVars {
    w: Vec<Var>,
    b: Vec<Var>,
}

/// Tape handles for every layer's effective (masked) conditioner weights.
#[derive(Debug, Clone)]
pub struct FlowVars {
    layers: Vec<LayerVars>,
}

/// Autoregressive degrees of the input, hidden and output units.
fn degrees(dim: usize, hidden: &[usize]) -> (Vec<usize>, Vec<Vec<usize>>, Vec<usize>) {
    let input: Vec<usize> = (1..=dim).collect();
    let hid = hidden
        .iter()
        .map(|&h| {
            (0..h)
                .map(|k| if dim > 1 { k % (dim - 1) + 1 } else { 1 })
                .collect()
        })
        .collect();
    let output = (1..=dim).chain(1..=dim).collect();
    (input, hid, output)
}

/// Connectivity masks, one per weight matrix.
fn masks(dim: usize, hidden: &[usize]) -> Vec<Array2<f64>> {
    let (input, hid, output) = degrees(dim, hidden);
    let mut out = Vec::with_capacity(hidden.len() + 1);
    let mut prev = &input;
    for h in &hid {
        out.push(Array2::from_shape_fn((prev.len(), h.len()), |(i, j)| {
            if h[j] >= prev[i] {
                1.0
            } else {
                0.0
            }
        }));
        prev = h;
    }
    out.push(Array2::from_shape_fn(
        (prev.len(), output.len()),
        |(i, j)| {
            if output[j] > prev[i] {
                1.0
            } else {
                0.0
            }
        },
    ));
    out
}

impl AutoregressiveFlow {
    /// Flow with He-initialised hidden conditioner weights and zero output
    /// layers, i.e. the identity map whenever `layers` is even.
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: &[usize], layers: usize, rng: &mut R) -> Self {
        assert!(
            dim > 0 && !hidden.is_empty(),
            "flow needs a dimension and a hidden layer"
        );
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * dim);
        let layers = (0..layers)
            .map(|_| {
                let n = sizes.len() - 1;
                let weights = (0..n)
                    .map(|i| {
                        if i + 1 == n {
                            Array2::zeros((sizes[i], sizes[i + 1]))
                        } else {
                            let scale = (2.0 / sizes[i] as f64).sqrt();
                            Array2::from_shape_simple_fn((sizes[i], sizes[i + 1]), || {
                                let v: f64 = StandardNormal.sample(rng);
                                v * scale
                            })
                        }
                    })
                    .collect();
                let biases = (0..n).map(|i| Array2::zeros((1, sizes[i + 1]))).collect();
                MadeLayer { weights, biases }
            })
            .collect();
        Self {
            dim,
            hidden: hidden.to_vec(),
            layers,
        }
    }

    /// A flow whose output layers are also random (scale `out_scale`), used
    /// to exercise non-trivial bijections.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        hidden: &[usize],
        layers: usize,
        out_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut flow = Self::new(dim, hidden, layers, rng);
        for layer in &mut flow.layers {
            let n = layer.weights.len();
            for p in [&mut layer.weights[n - 1], &mut layer.biases[n - 1]] {
                p.mapv_inplace(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    v * out_scale
                });
            }
        }
        flow
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Output bias row `[μ_1..μ_d, s_1..s_d]` of layer `k`.
    pub fn output_bias_mut(&mut self, k: usize) -> &mut Array2<f64> {
        self.layers[k].biases.last_mut().expect("output layer")
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        let mut sizes = vec![self.dim];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(2 * self.dim);
        let ok = self.layers.iter().all(|l| {
            l.weights.len() == sizes.len() - 1
                && l.biases.len() == sizes.len() - 1
                && l.weights
                    .iter()
                    .enumerate()
                    .all(|(i, w)| w.dim() == (sizes[i], sizes[i + 1]))
                && l.biases
                    .iter()
                    .enumerate()
                    .all(|(i, b)| b.dim() == (1, sizes[i + 1]))
        });
        if ok {
            Ok(())
        } else {
            Err(DiffError::ShapeMismatch {
                expected: format!("conditioner sizes {sizes:?}"),
                got: "inconsistent flow layers".into(),
            })
        }
    }

    /// Splits effective-parameter leaves (in parameter order) into layers.
    pub fn vars(&self, leaves: &[Var]) -> FlowVars {
        let per = 2 * (self.hidden.len() + 1);
        assert_eq!(leaves.len(), per * self.layers.len(), "flow leaf count");
        let layers = leaves
            .chunks(per)
            .map(|c| LayerVars {
                w: c[..per / 2].to_vec(),
                b: c[per / 2..].to_vec(),
            })
            .collect();
        FlowVars { layers }
    }

    fn conditioner(t: &mut Tape<'_>, lv: &LayerVars, x: Var, dim: usize) -> (Var, Var) {
        let n = lv.w.len();
        let mut h = x;
        for i in 0..n {
            let pre = t.matmul(h, lv.w[i]);
            h = t.add(pre, lv.b[i]);
            if i + 1 < n {
                h = t.unary(CONDITIONER_ACTIVATION.unary(), h);
            }
        }
        let mu = t.cols(h, 0, dim);
        let s = t.cols(h, dim, dim);
        (mu, s)
    }

    fn reversal(dim: usize) -> Vec<usize> {
        (0..dim).rev().collect()
    }

    /// `z = h(x)` for a batch of rows.
    pub fn forward(t: &mut Tape<'_>, v: &FlowVars, x: Var) -> Var {
        let dim = t.shape(x).1;
        let rev = Self::reversal(dim);
        let mut x = x;
        for lv in &v.layers {
            let (mu, s) = Self::conditioner(t, lv, x, dim);
            let e = t.exp(s);
            let scaled = t.mul(x, e);
            let y = t.add(scaled, mu);
            x = t.permute_cols(y, &rev);
        }
        x
    }

    /// `x = h⁻¹(z)` for a batch of rows, solved coordinate by coordinate.
    pub fn inverse(t: &mut Tape<'_>, v: &FlowVars, z: Var) -> Var {
        let (rows, dim) = t.shape(z);
        let rev = Self::reversal(dim);
        let mut cur = z;
        for lv in v.layers.iter().rev() {
            let y = t.permute_cols(cur, &rev);
            let mut known: Vec<Var> = Vec::with_capacity(dim);
            for j in 0..dim {
                let partial = if j == 0 {
                    t.constant(Array2::zeros((rows, dim)))
                } else {
                    let mut parts = known.clone();
                    parts.push(t.constant(Array2::zeros((rows, dim - j))));
                    t.concat(&parts)
                };
                let (mu, s) = Self::conditioner(t, lv, partial, dim);
                let mu_j = t.cols(mu, j, 1);
                let s_j = t.cols(s, j, 1);
                let y_j = t.cols(y, j, 1);
                let centred = t.sub(y_j, mu_j);
                let neg = t.neg(s_j);
                let inv_scale = t.exp(neg);
                known.push(t.mul(centred, inv_scale));
            }
            cur = t.concat(&known);
        }
        cur
    }

    pub fn forward_point(&self, x: &[f64]) -> Result<Vec<f64>, DiffError> {
        Ok(Frozen::new(self)
            .forward(super::row(x).view())?
            .row(0)
            .to_vec())
    }

    pub fn inverse_point(&self, z: &[f64]) -> Result<Vec<f64>, DiffError> {
        Ok(Frozen::new(self)
            .inverse(super::row(z).view())?
            .row(0)
            .to_vec())
    }
}

impl Parameterised for AutoregressiveFlow {
    fn params(&self) -> Vec<&Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
            .collect()
    }

    fn reparams(&self) -> Vec<Reparam> {
        let m = masks(self.dim, &self.hidden);
        let per_layer: Vec<Reparam> = m
            .into_iter()
            .map(Reparam::Mask)
            .chain(std::iter::repeat_n(
                Reparam::Identity,
                self.hidden.len() + 1,
            ))
            .collect();
        per_layer
            .iter()
            .cycle()
            .take(per_layer.len() * self.layers.len())
            .cloned()
            .collect()
    }
}

impl Frozen<'_, AutoregressiveFlow> {
    fn run(&self, input: ArrayView2<f64>, inverse: bool) -> Result<Array2<f64>, DiffError> {
        check_cols(input, self.net().dim)?;
        let mut t = Tape::new();
        let leaves = self.bind(&mut t);
        let v = self.net().vars(&leaves);
        let iv = t.constant(input.to_owned());
        let out = if inverse {
            AutoregressiveFlow::inverse(&mut t, &v, iv)
        } else {
            AutoregressiveFlow::forward(&mut t, &v, iv)
        };
        Ok(t.value(out).clone())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, DiffError> {
        self.run(x, false)
    }

    pub fn inverse(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, DiffError> {
        self.run(z, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn masks_are_autoregressive() {
        for dim in 1..5 {
            let m = masks(dim, &[7, 5]);
            let conn = m.iter().skip(1).fold(m[0].clone(), |acc, w| acc.dot(w));
            for i in 0..dim {
                for j in 0..dim {
                    // Output j (μ_j and s_j) sees input i only when i < j.
                    for col in [j, dim + j] {
                        assert_eq!(conn[[i, col]] > 0.0, i < j, "dim {dim} in {i} out {col}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_initialised_flow_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let flow = AutoregressiveFlow::new(2, &[16, 16], 4, &mut rng);
        assert_eq!(flow.forward_point(&[0.3, -0.2]).unwrap(), vec![0.3, -0.2]);
        assert_eq!(flow.inverse_point(&[0.3, -0.2]).unwrap(), vec![0.3, -0.2]);
    }

    #[test]
    fn single_layer_affine_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut flow = AutoregressiveFlow::new(2, &[8], 1, &mut rng);
        // μ_1 = 0.5, s_1 = 0.2, the first coordinate has no predecessors.
        let bias = flow.output_bias_mut(0);
        bias[[0, 0]] = 0.5;
        bias[[0, 2]] = 0.2;
        let x = [0.7, -1.1];
        let z = flow.forward_point(&x).unwrap();
        let z1 = 0.7 * 0.2f64.exp() + 0.5;
        // One reversal: the transformed first coordinate lands last.
        assert!((z[1] - z1).abs() < 1e-15);
        assert_eq!(z[0], -1.1);
        let back = flow.inverse_point(&z).unwrap();
        assert!((back[0] - (z1 - 0.5) * (-0.2f64).exp()).abs() < 1e-15);
        assert!((back[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn random_flows_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for dim in [1, 2, 3, 5] {
            let flow = AutoregressiveFlow::random(dim, &[12, 12], 4, 0.3, &mut rng);
            let x = Array2::from_shape_fn((50, dim), |(i, j)| ((i * 7 + j * 3) as f64).sin() * 2.0);
            let fr = Frozen::new(&flow);
            let z = fr.forward(x.view()).unwrap();
            assert!(
                (&z - &x).iter().any(|v| v.abs() > 1e-3),
                "flow should not be trivial"
            );
            let back = fr.inverse(z.view()).unwrap();
            let err = (&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-10, "dim {dim}: {err}");
        }
    }
}
