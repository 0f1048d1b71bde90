//! Strictly input-convex network.
//!
//! Hidden recursion, in row-vector form:
//!
//! ```text
//! c₁     = softplus(z·W₀ᶻ + b₀)
//! cᵢ₊₁   = softplus(cᵢ·Wᵢᶜ + z·Wᵢᶻ + bᵢ)        i ≥ 1
//! f(z)   = c_k·wᶜ + z·wᶻ + b
//! ```
//!
//! Every `Wᵢᶜ` and the output `wᶜ` are softplus images of raw weights, hence
//! strictly positive. Softplus is strictly convex and increasing, so each
//! hidden unit is strictly convex in `z` as long as the first-layer injection
//! `W₀ᶻ` has no zero column, and positive combinations plus an affine term
//! keep the output strictly convex.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    check_cols, softplus, softplus_inv, Activation, DiffError, Frozen, Parameterised, Reparam,
    Tape, Var,
};

/// Hidden-unit nonlinearity; convex and non-decreasing as required.
pub const HIDDEN_ACTIVATION: Activation = Activation::Softplus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Icnn {
    input_dim: usize,
    widths: Vec<usize>,
    /// Input injections `Wᵢᶻ`, `d × lᵢ`, unconstrained.
    wz: Vec<Array2<f64>>,
    /// Raw hidden-to-hidden weights for layers `1..k-1`, `lᵢ₋₁ × lᵢ`.
    raw_wc: Vec<Array2<f64>>,
    /// Biases, `1 × lᵢ`.
    b: Vec<Array2<f64>>,
    /// Raw output weight on the last hidden vector, `l_last × 1`.
    raw_out_c: Array2<f64>,
    /// Output weight on `z`, `d × 1`.
    out_z: Array2<f64>,
    /// Output bias, `1 × 1`.
    out_b: Array2<f64>,
}

/// Tape handles for the effective (post-reparameterisation) weights.
#[derive(Debug, Clone)]
pub struct IcnnVars {
    wz: Vec<Var>,
    wc: Vec<Var>,
    b: Vec<Var>,
    out_c: Var,
    out_z: Var,
    out_b: Var,
}

impl Icnn {
    /// Random initialisation. Effective hidden weights average `1/fan_in`
    /// so activations stay of order one through depth.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, widths: &[usize], rng: &mut R) -> Self {
        assert!(
            input_dim > 0 && !widths.is_empty(),
            "ICNN needs inputs and a hidden layer"
        );
        assert!(
            widths.iter().all(|&w| w > 0),
            "hidden widths must be positive"
        );
        let normal = |rng: &mut R, rows: usize, cols: usize, scale: f64| {
            Array2::from_shape_simple_fn((rows, cols), || {
                let v: f64 = StandardNormal.sample(rng);
                v * scale
            })
        };
        let positive_raw = |rng: &mut R, rows: usize, cols: usize| {
            let mean = 1.0 / rows as f64;
            Array2::from_shape_simple_fn((rows, cols), || {
                softplus_inv(mean * rng.random_range(0.5..1.5))
            })
        };
        let inj = 1.0 / (input_dim as f64).sqrt();
        let wz = widths
            .iter()
            .map(|&w| normal(rng, input_dim, w, inj))
            .collect();
        let raw_wc = widths
            .windows(2)
            .map(|p| positive_raw(rng, p[0], p[1]))
            .collect();
        let b = widths.iter().map(|&w| Array2::zeros((1, w))).collect();
        let last = *widths.last().unwrap();
        Self {
            input_dim,
            widths: widths.to_vec(),
            wz,
            raw_wc,
            b,
            raw_out_c: positive_raw(rng, last, 1),
            out_z: normal(rng, input_dim, 1, 0.1 * inj),
            out_b: Array2::zeros((1, 1)),
        }
    }

    /// Builds a network from explicit parts; `raw_wc.len()` must be one less
    /// than the number of hidden layers.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        wz: Vec<Array2<f64>>,
        raw_wc: Vec<Array2<f64>>,
        b: Vec<Array2<f64>>,
        raw_out_c: Array2<f64>,
        out_z: Array2<f64>,
        out_b: Array2<f64>,
    ) -> Result<Self, DiffError> {
        let mismatch = |what: &str| DiffError::ShapeMismatch {
            expected: format!("consistent ICNN {what}"),
            got: "inconsistent parts".into(),
        };
        let input_dim = wz.first().ok_or_else(|| mismatch("layers"))?.nrows();
        let widths: Vec<usize> = wz.iter().map(|w| w.ncols()).collect();
        if wz.iter().any(|w| w.nrows() != input_dim)
            || raw_wc.len() + 1 != widths.len()
            || raw_wc
                .iter()
                .enumerate()
                .any(|(i, w)| w.dim() != (widths[i], widths[i + 1]))
            || b.len() != widths.len()
            || b.iter().zip(&widths).any(|(b, &w)| b.dim() != (1, w))
            || raw_out_c.dim() != (*widths.last().unwrap(), 1)
            || out_z.dim() != (input_dim, 1)
            || out_b.dim() != (1, 1)
        {
            return Err(mismatch("shapes"));
        }
        Ok(Self {
            input_dim,
            widths,
            wz,
            raw_wc,
            b,
            raw_out_c,
            out_z,
            out_b,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Effective positive hidden weights `Wᵢᶜ`, `i ≥ 1`.
    pub fn effective_wc(&self) -> Vec<Array2<f64>> {
        self.raw_wc.iter().map(|w| w.mapv(softplus)).collect()
    }

    /// Effective positive output weights on the last hidden vector.
    pub fn effective_out_c(&self) -> Array2<f64> {
        self.raw_out_c.mapv(softplus)
    }

    /// Scales the output layer (weights on `c_k`, `z` and the bias) by `c > 0`.
    pub fn scale_output(&mut self, c: f64) {
        assert!(c > 0.0);
        self.raw_out_c
            .mapv_inplace(|r| softplus_inv(softplus(r) * c));
        self.out_z *= c;
        self.out_b *= c;
    }

    /// Checks that the stored arrays describe a consistent network.
    pub fn validate(&self) -> Result<(), DiffError> {
        Self::from_parts(
            self.wz.clone(),
            self.raw_wc.clone(),
            self.b.clone(),
            self.raw_out_c.clone(),
            self.out_z.clone(),
            self.out_b.clone(),
        )
        .map(|_| ())
    }

    /// Splits effective-parameter leaves (in parameter order) into roles.
    pub fn vars(&self, leaves: &[Var]) -> IcnnVars {
        let k = self.widths.len();
        assert_eq!(leaves.len(), 3 * k + 2, "ICNN leaf count");
        IcnnVars {
            wz: leaves[..k].to_vec(),
            wc: leaves[k..2 * k - 1].to_vec(),
            b: leaves[2 * k - 1..3 * k - 1].to_vec(),
            out_c: leaves[3 * k - 1],
            out_z: leaves[3 * k],
            out_b: leaves[3 * k + 1],
        }
    }

    /// `f(z)` for a batch of latent rows, shape `B×1`.
    pub fn forward(t: &mut Tape<'_>, v: &IcnnVars, z: Var) -> Var {
        let mut c: Option<Var> = None;
        for i in 0..v.wz.len() {
            let inj = t.matmul(z, v.wz[i]);
            let pre = match c {
                Some(prev) => {
                    let hid = t.matmul(prev, v.wc[i - 1]);
                    t.add(hid, inj)
                }
                None => inj,
            };
            let pre = t.add(pre, v.b[i]);
            c = Some(t.unary(HIDDEN_ACTIVATION.unary(), pre));
        }
        let hc = t.matmul(c.expect("at least one hidden layer"), v.out_c);
        let hz = t.matmul(z, v.out_z);
        let out = t.add(hc, hz);
        t.add(out, v.out_b)
    }

    /// Evaluates `f` at a single point.
    pub fn eval_point(&self, z: &[f64]) -> Result<f64, DiffError> {
        Ok(Frozen::new(self).eval(super::row(z).view())?[0])
    }
}

impl Parameterised for Icnn {
    fn params(&self) -> Vec<&Array2<f64>> {
        let mut p: Vec<&Array2<f64>> = self.wz.iter().collect();
        p.extend(self.raw_wc.iter());
        p.extend(self.b.iter());
        p.extend([&self.raw_out_c, &self.out_z, &self.out_b]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p: Vec<&mut Array2<f64>> = self.wz.iter_mut().collect();
        p.extend(self.raw_wc.iter_mut());
        p.extend(self.b.iter_mut());
        p.extend([&mut self.raw_out_c, &mut self.out_z, &mut self.out_b]);
        p
    }

    fn reparams(&self) -> Vec<Reparam> {
        let k = self.widths.len();
        let mut r = vec![Reparam::Identity; k];
        r.extend(vec![Reparam::Softplus; k - 1]);
        r.extend(vec![Reparam::Identity; k]);
        r.extend([Reparam::Softplus, Reparam::Identity, Reparam::Identity]);
        r
    }
}

impl Frozen<'_, Icnn> {
    pub fn eval(&self, z: ArrayView2<f64>) -> Result<Array1<f64>, DiffError> {
        check_cols(z, self.net().input_dim)?;
        let mut t = Tape::new();
        let leaves = self.bind(&mut t);
        let v = self.net().vars(&leaves);
        let zv = t.constant(z.to_owned());
        let out = Icnn::forward(&mut t, &v, zv);
        Ok(t.value(out).column(0).to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn unit_net(out_weight: f64) -> Icnn {
        Icnn::from_parts(
            vec![array![[1.0]]],
            vec![],
            vec![array![[0.0]]],
            array![[softplus_inv(out_weight)]],
            array![[0.0]],
            array![[0.0]],
        )
        .unwrap()
    }

    #[test]
    fn single_unit_is_softplus() {
        let f = unit_net(1.0).eval_point(&[0.0]).unwrap();
        assert!((f - std::f64::consts::LN_2).abs() < 1e-12);
        let f2 = unit_net(2.0).eval_point(&[0.0]).unwrap();
        assert!((f2 - 2.0 * f).abs() < 1e-12);
    }

    #[test]
    fn effective_weights_strictly_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Icnn::new(2, &[8, 8, 8], &mut rng);
        for p in net.params_mut() {
            p.mapv_inplace(|_| -40.0);
        }
        assert!(net
            .effective_wc()
            .iter()
            .all(|w| w.iter().all(|&v| v > 0.0)));
        assert!(net.effective_out_c().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn midpoint_strictly_below_chord() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Icnn::new(2, &[16, 16, 16, 16], &mut rng);
        for _ in 0..200 {
            let z1 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let z2 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let mid = [(z1[0] + z2[0]) / 2.0, (z1[1] + z2[1]) / 2.0];
            let chord = 0.5 * net.eval_point(&z1).unwrap() + 0.5 * net.eval_point(&z2).unwrap();
            assert!(net.eval_point(&mid).unwrap() < chord);
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Icnn::new(2, &[4], &mut rng);
        assert!(matches!(
            net.eval_point(&[1.0]),
            Err(DiffError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn effective_gradients_pull_back_to_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Icnn::new(3, &[5, 7], &mut rng);
        let z = array![[0.1, -0.3, 0.7], [1.0, 0.2, -0.5]];
        let loss = |net: &Icnn| Frozen::new(net).eval(z.view()).unwrap().sum();
        let eff = net.effective();
        let mut t = Tape::new();
        let leaves = crate::diffnet::bind_params(&mut t, &eff);
        let zv = t.constant(z.clone());
        let out = Icnn::forward(&mut t, &net.vars(&leaves), zv);
        let s = t.sum(out);
        assert!((t.item(s) - loss(&net)).abs() < 1e-12);
        let g = t.backward(s);
        let raw = net.raw_grads(leaves.iter().map(|&l| g.wrt(l)).collect());
        let h = 1e-6;
        for (pi, gp) in raw.iter().enumerate() {
            for idx in [0, gp.len() - 1] {
                let mut plus = net.clone();
                let mut minus = net.clone();
                plus.params_mut()[pi].as_slice_mut().unwrap()[idx] += h;
                minus.params_mut()[pi].as_slice_mut().unwrap()[idx] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = gp.as_slice().unwrap()[idx];
                assert!(
                    (fd - an).abs() < 1e-6 * (1.0 + an.abs()),
                    "param {pi}: {fd} vs {an}"
                );
            }
        }
    }
}
