//! Brute-force probes: Hausdorff distance, convexity margins, multistart
//! clustering and finite-difference gradients.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::diffnet::{bind_params, Parameterised, Tape};
use crate::levelset::{
    minimize_many, BatchMap, LevelSetError, MinStatus, MinimizeOptions, MinimumResult, SubspaceBox,
};
use crate::model::{InvexModel, VaeModel};
use crate::par;

/// Symmetric Hausdorff distance between two point clouds, by exhaustive search.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, VerifyError> {
    if a.is_empty() || b.is_empty() {
        return Err(VerifyError::EmptyInput("hausdorff"));
    }
    Ok(directed(a, b).max(directed(b, a)))
}

fn directed(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let nearest = par::map_indices(a.len(), |i| {
        b.iter()
            .map(|q| {
                a[i].iter()
                    .zip(q)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    });
    nearest.into_iter().fold(0.0, f64::max).sqrt()
}

/// Sampling region for [`convexity_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProbe {
    pub dim: usize,
    pub trials: usize,
    /// Points are drawn uniformly from `[lo, hi]^dim`.
    pub lo: f64,
    pub hi: f64,
    /// Mixing weights are drawn uniformly from this interval.
    pub lambda: (f64, f64),
    /// Pairs closer than this are redrawn.
    pub min_separation: f64,
    pub seed: u64,
}

impl ConvexityProbe {
    pub fn new(dim: usize, trials: usize, seed: u64) -> Self {
        Self {
            dim,
            trials,
            lo: -1.0,
            hi: 1.0,
            lambda: (0.0, 1.0),
            min_separation: 0.0,
            seed,
        }
    }
}

/// Smallest observed `λf(z₁) + (1−λ)f(z₂) − f(λz₁ + (1−λ)z₂)`.
///
/// `f` is evaluated on batches (one point per row); the three evaluations of
/// all trials are done as three batches.
pub fn convexity_probe<F>(f: F, probe: &ConvexityProbe) -> Result<f64, VerifyError>
where
    F: Fn(ArrayView2<f64>) -> Array1<f64>,
{
    if probe.trials == 0 || probe.dim == 0 {
        return Err(VerifyError::EmptyInput("convexity probe"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let (n, d) = (probe.trials, probe.dim);
    let mut z1 = Array2::zeros((n, d));
    let mut z2 = Array2::zeros((n, d));
    let mut lam = Array1::zeros(n);
    for t in 0..n {
        loop {
            let a: Vec<f64> = (0..d)
                .map(|_| rng.random_range(probe.lo..=probe.hi))
                .collect();
            let b: Vec<f64> = (0..d)
                .map(|_| rng.random_range(probe.lo..=probe.hi))
                .collect();
            let dist = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if dist >= probe.min_separation {
                z1.row_mut(t).assign(&Array1::from(a));
                z2.row_mut(t).assign(&Array1::from(b));
                break;
            }
        }
        lam[t] = rng.random_range(probe.lambda.0..=probe.lambda.1);
    }
    let lam_col = lam.view().insert_axis(ndarray::Axis(1));
    let mid = &z1 * &lam_col + &z2 * &(1.0 - &lam_col);
    let (f1, f2, fm) = (f(z1.view()), f(z2.view()), f(mid.view()));
    let margins = &lam * &f1 + &(1.0 - &lam) * &f2 - &fm;
    Ok(margins.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Indices into [`StationaryReport::runs`].
    pub members: Vec<usize>,
    pub best_value: f64,
    pub best_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub runs: Vec<MinimumResult>,
    pub merge_radius: f64,
    /// Cluster index per run; `None` for runs that hit the iteration cap.
    pub assignment: Vec<Option<usize>>,
    pub clusters: Vec<Cluster>,
}

impl StationaryReport {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn failures(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }

    /// Largest minus smallest value over all clustered runs.
    pub fn value_spread(&self) -> f64 {
        let vals: Vec<f64> = self
            .runs
            .iter()
            .zip(&self.assignment)
            .filter(|(_, a)| a.is_some())
            .map(|(r, _)| r.value)
            .collect();
        if vals.is_empty() {
            return 0.0;
        }
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Descends from `starts` seeded points uniform in `domain` and groups the end
/// points by single linkage at `merge_radius`.
///
/// Runs that stop at the iteration cap or escape are kept in the report but
/// not clustered. Runs that stall (no representable descent step) are
/// clustered, since that happens at non-smooth minima. Unless `opts` sets an
/// escape radius, a run escapes once it is 100 domain diagonals from its start.
pub fn multistart_stationary(
    map: &dyn BatchMap,
    domain: &SubspaceBox,
    starts: usize,
    merge_radius: f64,
    seed: u64,
    opts: &MinimizeOptions,
) -> Result<StationaryReport, LevelSetError> {
    if starts < 2 {
        return Err(LevelSetError::InvalidQuery(
            "multistart needs at least two starts".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..starts)
        .map(|_| {
            domain
                .lower()
                .iter()
                .zip(domain.upper())
                .map(|(&l, &u)| rng.random_range(l..=u))
                .collect()
        })
        .collect();
    let diagonal = domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(l, u)| (u - l) * (u - l))
        .sum::<f64>()
        .sqrt();
    let opts = MinimizeOptions {
        escape_radius: opts.escape_radius.or(Some(100.0 * diagonal)),
        ..*opts
    };
    let runs = minimize_many(map, &points, None, &opts)?;
    let ok: Vec<usize> = (0..runs.len())
        .filter(|&i| !matches!(runs[i].status, MinStatus::IterationCap | MinStatus::Escaped))
        .collect();

    // Union-find over runs closer than the merge radius.
    let mut parent: Vec<usize> = (0..runs.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let n = p[c];
            p[c] = r;
            c = n;
        }
        r
    }
    for (a_pos, &a) in ok.iter().enumerate() {
        for &b in &ok[a_pos + 1..] {
            let d = runs[a]
                .z
                .iter()
                .zip(&runs[b].z)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if d <= merge_radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut assignment = vec![None; runs.len()];
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut root_to_cluster = std::collections::BTreeMap::new();
    for &i in &ok {
        let root = find(&mut parent, i);
        let c = *root_to_cluster.entry(root).or_insert_with(|| {
            clusters.push(Cluster {
                members: vec![],
                best_value: f64::INFINITY,
                best_point: vec![],
            });
            clusters.len() - 1
        });
        assignment[i] = Some(c);
        let cl = &mut clusters[c];
        cl.members.push(i);
        if runs[i].value < cl.best_value {
            cl.best_value = runs[i].value;
            cl.best_point = runs[i].z.clone();
        }
    }
    Ok(StationaryReport {
        runs,
        merge_radius,
        assignment,
        clusters,
    })
}

/// Max over coordinates of `|g_i − ĝ_i| / (1 + |g_i|)` with central differences `ĝ`.
pub fn fd_grad_check<F>(
    f: F,
    analytic: &[f64],
    point: &[f64],
    step: f64,
) -> Result<f64, VerifyError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(VerifyError::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    if analytic.len() != point.len() {
        return Err(VerifyError::InvalidArgument(
            "gradient and point differ in length".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    let mut p = point.to_vec();
    for i in 0..p.len() {
        let x = p[i];
        p[i] = x + step;
        let up = f(&p);
        p[i] = x - step;
        let down = f(&p);
        p[i] = x;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max((analytic[i] - numeric).abs() / (1.0 + analytic[i].abs()));
    }
    Ok(worst)
}

/// Gradient check of the full composition `F = g ∘ f ∘ h` of an invex model,
/// in data units.
///
/// Checks `∂F/∂x` at `x` in every coordinate and `∂F/∂θ` on `param_samples`
/// raw parameter entries drawn from the seed. Returns the worst relative error.
pub fn composition_grad_check(
    model: &InvexModel,
    x: &[f64],
    step: f64,
    param_samples: usize,
    seed: u64,
) -> Result<f64, VerifyError> {
    let eval = |m: &InvexModel, p: &[f64]| m.invex_property(p).expect("finite probe point");
    let (_, gx) =
        crate::model::Evaluator::new(model).property_grad(crate::diffnet::row(x).view())?;
    let mut worst = fd_grad_check(|p| eval(model, p), &gx.row(0).to_vec(), x, step)?;

    // Analytic parameter gradient of F(x).
    let effective = model.effective();
    let raw = {
        let mut t = Tape::new();
        let leaves = bind_params(&mut t, &effective);
        let n = leaves.len();
        let v = model.bind_vars(&leaves[..n - 3]);
        let xv = t.constant(crate::diffnet::row(x));
        let z = model.encode_mean(&mut t, &v, xv);
        let y = model.property(&mut t, &v, z);
        let y = t.scale(y, model.target_scale().std);
        let g = t.backward(y);
        model.raw_grads(leaves.iter().map(|&l| g.wrt(l)).collect())
    };
    drop(effective);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    for _ in 0..param_samples {
        let mut flat = rng.random_range(0..total);
        let k = sizes
            .iter()
            .position(|&s| {
                if flat < s {
                    true
                } else {
                    flat -= s;
                    false
                }
            })
            .expect("index within parameters");
        let an = raw[k].as_slice().expect("standard layout")[flat];
        let at = |delta: f64| {
            let mut m = model.clone();
            let mut p = m.params_mut();
            p[k].as_slice_mut().expect("standard layout")[flat] += delta;
            drop(p);
            eval(&m, x)
        };
        let numeric = (at(step) - at(-step)) / (2.0 * step);
        worst = worst.max((an - numeric).abs() / (1.0 + an.abs()));
    }
    Ok(worst)
}

/// Worst `‖decode(encode(x)) − x‖∞` and `‖encode(decode(z)) − z‖∞` over the rows given.
pub fn roundtrip_error<M: VaeModel>(
    model: &M,
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
) -> Result<(f64, f64), VerifyError> {
    if x.nrows() == 0 || z.nrows() == 0 {
        return Err(VerifyError::EmptyInput("round trip"));
    }
    let ev = crate::model::Evaluator::new(model);
    let x_back = ev.decode(ev.encode(x)?.view())?;
    let z_back = ev.encode(ev.decode(z)?.view())?;
    let worst = |a: &Array2<f64>, b: ArrayView2<f64>| {
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };
    Ok((worst(&x_back, x), worst(&z_back, z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::FnMap;
    use crate::model::InvexArch;

    #[test]
    fn hausdorff_of_shifted_sets() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let b = vec![vec![0.0, 0.5]];
        let d = hausdorff(&a, &b).unwrap();
        assert!((d - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert!(hausdorff(&a, &[]).is_err());
    }

    #[test]
    fn convexity_margins_have_the_right_sign() {
        let probe = ConvexityProbe::new(3, 500, 7);
        let sq = |z: ArrayView2<f64>| z.map_axis(ndarray::Axis(1), |r| r.dot(&r));
        assert!(convexity_probe(sq, &probe).unwrap() >= -1e-12);
        let neg = |z: ArrayView2<f64>| z.map_axis(ndarray::Axis(1), |r| -r.dot(&r));
        assert!(convexity_probe(neg, &probe).unwrap() < 0.0);
    }

    #[test]
    fn multistart_separates_two_wells() {
        let map = FnMap::new(
            1,
            |z: &[f64]| (z[0] * z[0] - 1.0).powi(2),
            |z: &[f64]| vec![4.0 * z[0] * (z[0] * z[0] - 1.0)],
        );
        let domain = SubspaceBox::new(vec![-2.0], vec![2.0]).unwrap();
        let rep =
            multistart_stationary(&map, &domain, 40, 1e-2, 3, &MinimizeOptions::default()).unwrap();
        assert_eq!(rep.failures(), 0);
        assert_eq!(rep.cluster_count(), 2);
        assert!(rep.value_spread() < 1e-12);
    }

    #[test]
    fn finite_differences_agree_with_analytic() {
        let f = |p: &[f64]| p[0].sin() * p[1];
        let p = [0.3f64, -1.2];
        let g = [p[0].cos() * p[1], p[0].sin()];
        assert!(fd_grad_check(f, &g, &p, 1e-5).unwrap() < 1e-8);
        assert!(fd_grad_check(f, &[0.0, 0.0], &p, 1e-5).unwrap() > 0.1);
    }

    #[test]
    fn invex_composition_gradients() {
        let arch = InvexArch {
            flow_hidden: vec![16],
            icnn_widths: vec![16, 16],
            ..InvexArch::new(2)
        };
        let model = InvexModel::new(arch, 5);
        let err = composition_grad_check(&model, &[0.2, -0.3], 1e-5, 30, 1).unwrap();
        assert!(err < 1e-6, "{err}");
        let pts = ndarray::array![[0.2, -0.3], [1.5, 0.7]];
        let (ex, ez) = roundtrip_error(&model, pts.view(), pts.view()).unwrap();
        assert!(ex < 1e-12 && ez < 1e-12);
    }
}
