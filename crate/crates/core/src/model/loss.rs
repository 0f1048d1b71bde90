use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{split_leaves, Evaluator, ModelError, NoiseVars, VaeModel};
use crate::diffnet::{bind_params, check_cols, Tape, Var};
use crate::par;

/// Rows per independently differentiated chunk. Fixed so that the reduction
/// order, and hence every loss and gradient, is identical in both execution
/// modes.
pub const TRAIN_CHUNK: usize = 64;

const LN_2PI: f64 = 1.8378770664093453;

/// How the cycle re-encodes a decoded input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reencode {
    /// `z′ = μ_z(x̂)`.
    #[default]
    Mean,
    /// `z′ = μ_z(x̂) + σ_z·ε′`.
    Sample,
}

/// One minibatch with all of its random draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    /// Targets in data units.
    pub y: Array1<f64>,
    /// Reparameterisation noise, one row per sample.
    pub eps: Array2<f64>,
    /// Latents for the second cycle term.
    pub z_tilde: Array2<f64>,
    /// Re-encoding noise for the two cycle paths, only with [`Reencode::Sample`].
    pub cycle_eps: Option<(Array2<f64>, Array2<f64>)>,
}

impl Batch {
    /// Batch without cycle draws and with the given encoder noise.
    pub fn new(x: Array2<f64>, y: Array1<f64>, eps: Array2<f64>) -> Self {
        let dz = eps.ncols();
        Self {
            x,
            y,
            eps,
            z_tilde: Array2::zeros((0, dz)),
            cycle_eps: None,
        }
    }

    pub fn with_z_tilde(mut self, z_tilde: Array2<f64>) -> Self {
        self.z_tilde = z_tilde;
        self
    }

    /// Draws `ε ~ N(0, I)` and `z̃ ~ U[−b, b]^d_z`, one of each per row.
    pub fn draw<R: Rng + ?Sized>(
        x: Array2<f64>,
        y: Array1<f64>,
        latent_dim: usize,
        latent_box: f64,
        reencode: Reencode,
        rng: &mut R,
    ) -> Self {
        let n = x.nrows();
        let normal = |rng: &mut R| {
            Array2::from_shape_simple_fn((n, latent_dim), || StandardNormal.sample(rng))
        };
        let eps = normal(rng);
        let uni = Uniform::new_inclusive(-latent_box, latent_box).expect("valid latent box");
        let z_tilde = Array2::from_shape_simple_fn((n, latent_dim), || uni.sample(rng));
        let cycle_eps = match reencode {
            Reencode::Mean => None,
            Reencode::Sample => Some((normal(rng), normal(rng))),
        };
        Self {
            x,
            y,
            eps,
            z_tilde,
            cycle_eps,
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    fn validate<M: VaeModel>(&self, model: &M, cycle: bool) -> Result<(), ModelError> {
        if self.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        check_cols(self.x.view(), model.input_dim())?;
        check_cols(self.eps.view(), model.latent_dim())?;
        let shape_err = |what: &str| {
            ModelError::InvalidConfig(format!("batch {what} has the wrong number of rows"))
        };
        if self.y.len() != self.len() {
            return Err(shape_err("targets"));
        }
        if self.eps.nrows() != self.len() {
            return Err(shape_err("noise"));
        }
        if cycle {
            check_cols(self.z_tilde.view(), model.latent_dim())?;
            if let Some((a, b)) = &self.cycle_eps {
                if a.nrows() != self.len() || b.nrows() != self.z_tilde.nrows() {
                    return Err(shape_err("cycle noise"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    pub beta: f64,
    pub gamma: f64,
    /// Evaluate the cycle term at all.
    pub cycle: bool,
    pub reencode: Reencode,
}

impl LossOptions {
    pub fn vae(beta: f64) -> Self {
        Self {
            beta,
            gamma: 0.0,
            cycle: false,
            reencode: Reencode::Mean,
        }
    }
}

/// Batch means of each loss term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub nll_x: f64,
    pub nll_y: f64,
    pub kl: f64,
    /// Mean `|y − y′|` plus mean `|ỹ − ỹ′|`; zero when not evaluated.
    pub cycle: f64,
    pub beta: f64,
}

impl LossBreakdown {
    pub fn vae(&self) -> f64 {
        self.nll_x + self.nll_y + self.beta * self.kl
    }
}

/// `z = μ_z(x) + σ_z·ε`.
pub fn encode_sample<M: VaeModel>(
    model: &M,
    x: ArrayView2<f64>,
    noise: ArrayView2<f64>,
) -> Result<Array2<f64>, ModelError> {
    let mu = Evaluator::new(model).encode(x)?;
    if noise.dim() != mu.dim() {
        return Err(ModelError::InvalidConfig(
            "noise shape differs from latent batch".into(),
        ));
    }
    let (sz, _, _) = model.noise().sigmas();
    Ok(mu + &noise * sz)
}

/// Negative ELBO: Gaussian NLLs of `x` and `y` plus `β`·KL, batch means.
pub fn vae_loss<M: VaeModel>(
    model: &M,
    batch: &Batch,
    beta: f64,
) -> Result<LossBreakdown, ModelError> {
    Ok(evaluate(model, batch, &LossOptions::vae(beta), false)?.0)
}

/// Mean `|y − y′|` over the batch plus mean `|ỹ − ỹ′|` over `z̃`.
pub fn cycle_loss<M: VaeModel>(
    model: &M,
    batch: &Batch,
    reencode: Reencode,
) -> Result<f64, ModelError> {
    let opts = LossOptions {
        beta: 0.0,
        gamma: 0.0,
        cycle: true,
        reencode,
    };
    Ok(evaluate(model, batch, &opts, false)?.0.cycle)
}

/// `L_VAE + γ·L_cycle`.
pub fn total_loss<M: VaeModel>(
    model: &M,
    batch: &Batch,
    opts: &LossOptions,
) -> Result<LossBreakdown, ModelError> {
    Ok(evaluate(model, batch, opts, false)?.0)
}

/// Loss breakdown and gradients of `total` on the raw parameters, in
/// [`Parameterised::params`](crate::diffnet::Parameterised::params) order.
pub fn loss_and_grads<M: VaeModel>(
    model: &M,
    batch: &Batch,
    opts: &LossOptions,
) -> Result<(LossBreakdown, Vec<Array2<f64>>), ModelError> {
    let (l, g) = evaluate(model, batch, opts, true)?;
    Ok((l, g.expect("gradients requested")))
}

struct ChunkOut {
    sums: [f64; 5],
    grads: Option<Vec<Array2<f64>>>,
}

/// Loss breakdown and, optionally, gradients of `total` on the raw parameters.
pub(crate) fn evaluate<M: VaeModel>(
    model: &M,
    batch: &Batch,
    opts: &LossOptions,
    want_grads: bool,
) -> Result<(LossBreakdown, Option<Vec<Array2<f64>>>), ModelError> {
    batch.validate(model, opts.cycle)?;
    let n = batch.len();
    let m = if opts.cycle { batch.z_tilde.nrows() } else { 0 };
    let scale = model.target_scale();
    let ys = batch.y.mapv(|v| scale.to_standard(v)).insert_axis(Axis(1));
    let effective = model.effective();

    let parts = par::map_chunks(n.max(m), TRAIN_CHUNK, |r| {
        let mut t = Tape::new();
        let leaves = bind_params(&mut t, &effective);
        let (v, nv) = split_leaves(model, &leaves);
        let xr = r.start.min(n)..r.end.min(n);
        let zr = r.start.min(m)..r.end.min(m);
        let mut sums = [0.0; 5];
        let mut total: Option<Var> = None;
        let mut acc = |t: &mut Tape<'_>, term: Var, w: f64| {
            let scaled = t.scale(term, w);
            total = Some(match total {
                Some(prev) => t.add(prev, scaled),
                None => scaled,
            });
        };

        if !xr.is_empty() {
            let x = t.constant(batch.x.slice(s![xr.clone(), ..]).to_owned());
            let y = t.constant(ys.slice(s![xr.clone(), ..]).to_owned());
            let eps = t.constant(batch.eps.slice(s![xr.clone(), ..]).to_owned());
            let mu_z = model.encode_mean(&mut t, &v, x);
            let z = perturb(&mut t, mu_z, eps, nv.sigma_z);
            let mu_x = model.decode_mean(&mut t, &v, z);
            let y_hat = model.property(&mut t, &v, z);
            let nll_x = gaussian_nll(&mut t, x, mu_x, nv.sigma_x);
            let nll_y = gaussian_nll(&mut t, y, y_hat, nv.sigma_y);
            let kl = kl_term(&mut t, mu_z, nv);
            sums[0] = t.item(nll_x);
            sums[1] = t.item(nll_y);
            sums[2] = t.item(kl);
            acc(&mut t, nll_x, 1.0 / n as f64);
            acc(&mut t, nll_y, 1.0 / n as f64);
            acc(&mut t, kl, opts.beta / n as f64);
            if opts.cycle {
                let e = batch
                    .cycle_eps
                    .as_ref()
                    .map(|(a, _)| a.slice(s![xr.clone(), ..]).to_owned());
                let c = cycle_path(model, &mut t, &v, nv, y_hat, mu_x, e);
                sums[3] = t.item(c);
                acc(&mut t, c, opts.gamma / n as f64);
            }
        }
        if !zr.is_empty() {
            let zt = t.constant(batch.z_tilde.slice(s![zr.clone(), ..]).to_owned());
            let y_t = model.property(&mut t, &v, zt);
            let x_t = model.decode_mean(&mut t, &v, zt);
            let e = batch
                .cycle_eps
                .as_ref()
                .map(|(_, b)| b.slice(s![zr.clone(), ..]).to_owned());
            let c = cycle_path(model, &mut t, &v, nv, y_t, x_t, e);
            sums[4] = t.item(c);
            acc(&mut t, c, opts.gamma / m as f64);
        }
        let grads = match (want_grads, total) {
            (true, Some(total)) => {
                let g = t.backward(total);
                Some(leaves.iter().map(|&l| g.wrt(l)).collect())
            }
            _ => None,
        };
        ChunkOut { sums, grads }
    });

    let mut sums = [0.0; 5];
    let mut grads: Option<Vec<Array2<f64>>> = None;
    for p in parts {
        for (s, v) in sums.iter_mut().zip(p.sums) {
            *s += v;
        }
        if let Some(g) = p.grads {
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += &b),
            }
        }
    }
    let nf = n as f64;
    let cycle = if opts.cycle {
        sums[3] / nf + if m > 0 { sums[4] / m as f64 } else { 0.0 }
    } else {
        0.0
    };
    let mut out = LossBreakdown {
        total: 0.0,
        nll_x: sums[0] / nf,
        nll_y: sums[1] / nf,
        kl: sums[2] / nf,
        cycle,
        beta: opts.beta,
    };
    out.total = out.vae() + opts.gamma * out.cycle;
    for (v, name) in [
        (out.total, "total"),
        (out.nll_x, "nll_x"),
        (out.nll_y, "nll_y"),
        (out.kl, "kl"),
        (out.cycle, "cycle"),
    ] {
        if !v.is_finite() {
            return Err(ModelError::Divergence {
                epoch: 0,
                term: name,
            });
        }
    }
    let raw = grads.map(|g| model.raw_grads(g));
    Ok((out, raw))
}

fn perturb(t: &mut Tape<'_>, mu: Var, eps: Var, sigma: Var) -> Var {
    let noise = t.mul(eps, sigma);
    t.add(mu, noise)
}

/// Summed `‖a − μ‖²/(2σ²) + k·(ln σ + ½ln 2π)` over rows, `k` entries per row.
fn gaussian_nll(t: &mut Tape<'_>, a: Var, mu: Var, sigma: Var) -> Var {
    let k = {
        let (r, c) = t.shape(a);
        (r * c) as f64
    };
    let r = t.sub(a, mu);
    let r2 = t.square(r);
    let rss = t.sum(r2);
    let var = t.square(sigma);
    let two_var = t.scale(var, 2.0);
    let quad = t.div(rss, two_var);
    let ln_sigma = t.ln(sigma);
    let norm = t.scale(ln_sigma, k);
    let norm = t.offset(norm, 0.5 * k * LN_2PI);
    t.add(quad, norm)
}

/// Summed `½Σ_j(μ_j² + σ_z² − 1 − ln σ_z²)` over rows.
fn kl_term(t: &mut Tape<'_>, mu_z: Var, nv: NoiseVars) -> Var {
    let (rows, dz) = t.shape(mu_z);
    let mu2 = t.square(mu_z);
    let mu2 = t.sum(mu2);
    let var = t.square(nv.sigma_z);
    let ln_sigma = t.ln(nv.sigma_z);
    let ln_var = t.scale(ln_sigma, 2.0);
    let per = t.sub(var, ln_var);
    let per = t.offset(per, -1.0);
    let per = t.scale(per, (rows * dz) as f64);
    let all = t.add(mu2, per);
    t.scale(all, 0.5)
}

/// `Σ|y − property(encode(x̂))|` for decoded inputs `x̂` with properties `y`.
fn cycle_path<M: VaeModel>(
    model: &M,
    t: &mut Tape<'_>,
    v: &M::Vars,
    nv: NoiseVars,
    y: Var,
    x_hat: Var,
    eps: Option<Array2<f64>>,
) -> Var {
    let mut z = model.encode_mean(t, v, x_hat);
    if let Some(e) = eps {
        let e = t.constant(e);
        z = perturb(t, z, e, nv.sigma_z);
    }
    let y2 = model.property(t, v, z);
    let d = t.sub(y, y2);
    let d = t.abs(d);
    t.sum(d)
}
