//! Named verdicts bundling the probes into pass/fail checks.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    composition_grad_check, contour_of_values, convexity_probe, fd_grad_check, grid_values,
    hausdorff, multistart_stationary, ConvexityProbe, VerifyError,
};
use crate::diffnet::{AutoregressiveFlow, Frozen, Icnn, MonotoneHead};
use crate::levelset::{
    cart_to_sph, latent_domain, levelset_sample, region_center, sph_to_cart, BatchMap,
    LatentProperty, LatitudePolicy, LevelSetError, MinimizeOptions, RadiusOptions, SphericalPoint,
    SubspaceBox,
};
use crate::model::{Evaluator, InvexArch, InvexModel, VaeModel};
use crate::targets::{GridSpec, Target, DATA_BOX};

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    /// Human-readable comparison, e.g. `<= 1e-5`.
    pub threshold: String,
    pub pass: bool,
}

impl Verdict {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: format!("<= {limit:e}"),
            pass: value <= limit,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: format!("> {limit:e}"),
            pass: value > limit,
        }
    }

    pub fn equals(name: impl Into<String>, value: f64, expected: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: format!("== {expected}"),
            pass: value == expected,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} value={:e} threshold {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

/// Output-layer scale of random flows. Larger scales compound through the
/// four layers and push points past `1e6`, where round trips lose digits.
pub const RANDOM_FLOW_SCALE: f64 = 0.01;

/// An invex model with random flow, ICNN and head, all at default widths.
pub fn random_invex(dim: usize, seed: u64) -> InvexModel {
    let arch = InvexArch::new(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flow = AutoregressiveFlow::random(
        dim,
        &arch.flow_hidden,
        arch.flow_layers,
        RANDOM_FLOW_SCALE,
        &mut rng,
    );
    let icnn = Icnn::new(dim, &arch.icnn_widths, &mut rng);
    let head = MonotoneHead::from_raw(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    InvexModel::from_parts(flow, icnn, head).expect("matching dimensions")
}

fn uniform_points(rng: &mut ChaCha8Rng, n: usize, d: usize, half: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-half..=half))
}

/// Finite-difference check of `F = g ∘ f ∘ h` on `models` random compositions,
/// over the input and `param_samples` parameters each, at step 1e-5; plus the
/// oracle's own sanity check that a coarse step is detected.
pub fn grad_suite(
    models: usize,
    param_samples: usize,
    seed: u64,
) -> Result<Vec<Verdict>, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..models {
        let model = random_invex(2, seed.wrapping_add(k as u64));
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
        worst = worst.max(composition_grad_check(
            &model,
            &x,
            1e-5,
            param_samples,
            rng.random(),
        )?);
    }
    let quad = |p: &[f64]| p[0] * p[0] + 3.0 * p[0] * p[1] + 2.0 * p[1] * p[1];
    let p = [0.7, -1.3];
    let g = [2.0 * p[0] + 3.0 * p[1], 3.0 * p[0] + 4.0 * p[1]];
    let quad_err = fd_grad_check(quad, &g, &p, 1e-5)?;
    let cubic = |p: &[f64]| p[0].powi(3) + p[1].sin();
    let gc = [3.0 * p[0] * p[0], p[1].cos()];
    let (fine, coarse) = (
        fd_grad_check(cubic, &gc, &p, 1e-5)?,
        fd_grad_check(cubic, &gc, &p, 1e-1)?,
    );
    Ok(vec![
        Verdict::at_most(format!("grad.composition[{models}]"), worst, 1e-5),
        Verdict::at_most("grad.quadratic", quad_err, 1e-9),
        Verdict::above("grad.coarse-step-grows", coarse - fine, 0.0),
    ])
}

/// Worst `‖h⁻¹(h(x)) − x‖∞` and `‖h(h⁻¹(z)) − z‖∞` over random flows.
pub fn invert_suite(flows: usize, points: usize, seed: u64) -> Result<Vec<Verdict>, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..flows {
        let arch = InvexArch::new(2);
        let flow = AutoregressiveFlow::random(
            2,
            &arch.flow_hidden,
            arch.flow_layers,
            RANDOM_FLOW_SCALE,
            &mut rng,
        );
        let x = uniform_points(&mut rng, points, 2, 3.0);
        let frozen = Frozen::new(&flow);
        let back = frozen.inverse(frozen.forward(x.view())?.view())?;
        let fwd = frozen.forward(frozen.inverse(x.view())?.view())?;
        worst = worst
            .max(max_abs_diff(back.view(), x.view()))
            .max(max_abs_diff(fwd.view(), x.view()));
    }
    Ok(vec![Verdict::at_most(
        format!("invert.flow[{flows}x{points}]"),
        worst,
        1e-8,
    )])
}

/// Encoder/decoder round trip of a model in both directions.
///
/// Inputs are drawn from `[-0.5, 0.5]^d`, around the data box. Latent points
/// are the encodings of a second input sample: a trained flow can be so
/// expansive that decoding an arbitrary latent point overflows on re-encoding.
pub fn model_roundtrip_suite<M: VaeModel>(
    name: &str,
    model: &M,
    points: usize,
    seed: u64,
) -> Result<Vec<Verdict>, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform_points(&mut rng, points, model.input_dim(), 0.5);
    let x2 = uniform_points(&mut rng, points, model.input_dim(), 0.5);
    let z = crate::model::Evaluator::new(model).encode(x2.view())?;
    let (ex, ez) = super::roundtrip_error(model, x.view(), z.view())?;
    Ok(vec![
        Verdict::at_most(format!("invert.{name}.x"), ex, 1e-8),
        Verdict::at_most(format!("invert.{name}.z"), ez, 1e-8),
    ])
}

fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Convexity margins of random ICNNs and of the `trained` ones, and the affine
/// control whose margin must vanish.
pub fn convexity_suite(
    random: usize,
    trials: usize,
    seed: u64,
    trained: &[(&str, &Icnn)],
) -> Result<Vec<Verdict>, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = |s: u64| ConvexityProbe {
        lo: -3.0,
        hi: 3.0,
        ..ConvexityProbe::new(2, trials, s)
    };
    let mut worst = f64::INFINITY;
    for k in 0..random {
        let icnn = Icnn::new(2, &InvexArch::new(2).icnn_widths, &mut rng);
        let frozen = Frozen::new(&icnn);
        let m = convexity_probe(
            |z| frozen.eval(z).expect("finite probe"),
            &probe(seed.wrapping_add(k as u64)),
        )?;
        worst = worst.min(m);
    }
    let mut out = vec![Verdict::above(
        format!("convexity.random[{random}]"),
        worst,
        0.0,
    )];
    for (name, icnn) in trained {
        let frozen = Frozen::new(*icnn);
        let m = convexity_probe(|z| frozen.eval(z).expect("finite probe"), &probe(seed))?;
        out.push(Verdict::above(format!("convexity.{name}"), m, 0.0));
    }
    let affine = convexity_probe(
        |z| z.map_axis(ndarray::Axis(1), |r| 0.5 * r[0] - 2.0 * r[1] + 1.0),
        &probe(seed),
    )?;
    out.push(Verdict::at_most(
        "convexity.affine-control",
        affine.abs(),
        1e-12,
    ));
    let quad = ConvexityProbe {
        lambda: (0.1, 0.9),
        min_separation: 0.1,
        ..ConvexityProbe::new(2, trials, seed)
    };
    let q = convexity_probe(|z| z.map_axis(ndarray::Axis(1), |r| r.dot(&r)), &quad)?;
    out.push(Verdict::above("convexity.quadratic-bound", q, 9e-4 - 1e-15));
    Ok(out)
}

/// Cartesian/spherical round trips for `n ∈ {2, 3, 8}` and the exact axis cases.
pub fn spherical_suite(points: usize, seed: u64) -> Vec<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for n in [2usize, 3, 8] {
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let back = sph_to_cart(&cart_to_sph(&x), n);
            worst = worst.max(
                x.iter()
                    .zip(&back)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
        }
        out.push(Verdict::at_most(
            format!("roundtrip.spherical[n={n}]"),
            worst,
            1e-9,
        ));
    }
    let axis = |x: &[f64], lat: Vec<f64>, az: f64| {
        let s = cart_to_sph(x);
        s.r == 1.0 && s.latitudes == lat && s.azimuth == az
    };
    let cases = [
        axis(&[1.0, 0.0, 0.0], vec![0.0], 0.0),
        axis(&[0.0, 1.0, 0.0], vec![PI / 2.0], 0.0),
        axis(&[0.0, -1.0, 0.0], vec![PI / 2.0], PI),
    ];
    let from_sph = |p: SphericalPoint, want: [f64; 3]| sph_to_cart(&p, 3) == want.to_vec();
    let back = from_sph(SphericalPoint::new(1.0, vec![0.0], 0.0), [1.0, 0.0, 0.0]);
    let matched = cases.iter().filter(|&&c| c).count() + usize::from(back);
    out.push(Verdict::equals("roundtrip.axis-cases", matched as f64, 4.0));
    out
}

/// Number of minima clusters of `map` from `starts` seeded starts over `domain`.
pub fn multistart_suite(
    name: &str,
    map: &dyn BatchMap,
    domain: &SubspaceBox,
    starts: usize,
    expected: usize,
    seed: u64,
) -> Result<Vec<Verdict>, LevelSetError> {
    let rep = multistart_stationary(map, domain, starts, 1e-2, seed, &MinimizeOptions::default())?;
    let mut out = vec![
        Verdict::equals(
            format!("multistart.{name}.clusters"),
            rep.cluster_count() as f64,
            expected as f64,
        ),
        Verdict::equals(
            format!("multistart.{name}.failures"),
            rep.failures() as f64,
            0.0,
        ),
    ];
    if expected == 1 {
        out.push(Verdict::at_most(
            format!("multistart.{name}.spread"),
            rep.value_spread(),
            1e-6,
        ));
    }
    Ok(out)
}

/// Stationary points of an invex model's `F` over an input region.
///
/// `h` is a diffeomorphism, so the stationary points of `F = g∘f∘h` are the
/// images under `h⁻¹` of those of `g∘f`. The search therefore runs on the
/// latent map, from starts spread over the latent bounding box of `region`,
/// where divergent runs leave quickly instead of stalling against overflow
/// of `h`. Exactly one cluster is expected.
pub fn model_multistart_suite<M: VaeModel>(
    name: &str,
    model: &M,
    region: &SubspaceBox,
    starts: usize,
    seed: u64,
) -> Result<Vec<Verdict>, LevelSetError> {
    let space = LatentProperty::new(model);
    let domain = latent_domain(&space, region, 0.0)?;
    multistart_suite(name, &space, &domain, starts, 1, seed)
}

/// Outcome of comparing the parametric level curve with marching squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub alpha: f64,
    /// Worst `|F_model − α|` over the parametric samples.
    pub level_error: f64,
    /// Distance to the oracle curve of the model's own `F`.
    pub to_model_oracle: f64,
    /// Distance to the oracle curve of the true target.
    pub to_target_oracle: f64,
    /// Oracle grid spacing.
    pub cell: f64,
}

/// Grid the oracles are computed on: the data box inflated by 25%, 400 × 400.
pub fn oracle_grid() -> GridSpec {
    let half = 1.25 * DATA_BOX.1.max(-DATA_BOX.0);
    GridSpec::square(-half, half, 400)
}

fn inside_data_box(p: &[f64]) -> bool {
    p.iter().all(|&v| (DATA_BOX.0..=DATA_BOX.1).contains(&v))
}

/// The data box as an input region.
pub fn data_box() -> SubspaceBox {
    SubspaceBox::new(vec![DATA_BOX.0; 2], vec![DATA_BOX.1; 2]).expect("valid data box")
}

/// Samples the `α` level of a 2-D invex model parametrically and measures it
/// against marching-squares contours, both restricted to the data box.
///
/// The centre is the minimum over the latent image of the data box (see
/// [`region_center`]), since a trained model need not attain its infimum.
/// When only one of two curves reaches into the box, their distance is infinite.
pub fn oracle_compare(
    model: &InvexModel,
    target: Target,
    alpha: f64,
    samples: usize,
) -> Result<OracleComparison, crate::Error> {
    Ok(oracle_compare_many(model, target, &[alpha], samples)?.remove(0))
}

/// [`oracle_compare`] at several levels, sampling each grid once.
pub fn oracle_compare_many(
    model: &InvexModel,
    target: Target,
    alphas: &[f64],
    samples: usize,
) -> Result<Vec<OracleComparison>, crate::Error> {
    let space = LatentProperty::new(model);
    let (center, _) = region_center(&space, &data_box(), &MinimizeOptions::default())?;
    let opts = RadiusOptions::default();
    let grid = oracle_grid();
    let x2 = grid.points_along(1);
    let eval = Evaluator::new(model);
    let model_values = grid_values(
        |x1| {
            let col =
                Array2::from_shape_fn((x2.len(), 2), |(j, k)| if k == 0 { x1 } else { x2[j] });
            eval.property(col.view())
                .expect("finite grid column")
                .to_vec()
        },
        &grid,
    );
    let target_values = grid_values(
        |x1| x2.iter().map(|&v| target.eval([x1, v])).collect(),
        &grid,
    );
    let clip = |c: &super::OracleCurve| -> Vec<Vec<f64>> {
        c.points
            .iter()
            .map(|p| p.to_vec())
            .filter(|p| inside_data_box(p))
            .collect()
    };
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let curve = levelset_sample(
            &space,
            &center,
            alpha,
            samples,
            &LatitudePolicy::equator(2),
            &opts,
        )?;
        let level_error = curve
            .iter()
            .map(|p| (p.value - alpha).abs())
            .fold(0.0, f64::max);
        let param: Vec<Vec<f64>> = curve
            .iter()
            .map(|p| p.x.clone())
            .filter(|x| inside_data_box(x))
            .collect();
        let own = clip(&contour_of_values(&model_values, alpha, &grid));
        let truth = clip(&contour_of_values(&target_values, alpha, &grid));
        let dist = |o: &[Vec<f64>]| -> Result<f64, VerifyError> {
            // A curve that is missing from the box on one side only is infinitely far off.
            match (param.is_empty(), o.is_empty()) {
                (true, true) => Ok(0.0),
                (false, false) => hausdorff(&param, o),
                _ => Ok(f64::INFINITY),
            }
        };
        out.push(OracleComparison {
            alpha,
            level_error,
            to_model_oracle: dist(&own)?,
            to_target_oracle: dist(&truth)?,
            cell: grid.spacing(0),
        });
    }
    Ok(out)
}

/// Verdicts for [`oracle_compare`] at each level.
pub fn oracle_suite(
    model: &InvexModel,
    target: Target,
    alphas: &[f64],
    samples: usize,
) -> Result<Vec<Verdict>, crate::Error> {
    let mut out = Vec::new();
    for c in oracle_compare_many(model, target, alphas, samples)? {
        let alpha = c.alpha;
        out.push(Verdict::at_most(
            format!("oracle.level-error[alpha={alpha}]"),
            c.level_error,
            RadiusOptions::default().tol * (1.0 + alpha.abs()),
        ));
        out.push(Verdict::at_most(
            format!("oracle.model[alpha={alpha}]"),
            c.to_model_oracle,
            2.0 * c.cell,
        ));
        out.push(Verdict::at_most(
            format!("oracle.target[alpha={alpha}]"),
            c.to_target_oracle,
            0.05,
        ));
    }
    Ok(out)
}

/// Levels spread over the range of the target on the training grid, at the
/// quarter points.
pub fn spanning_levels(target: Target) -> Vec<f64> {
    let pts = GridSpec::training().points();
    let vals: Vec<f64> = pts
        .rows()
        .into_iter()
        .map(|r| target.eval([r[0], r[1]]))
        .collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (1..=3).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::TargetMap;

    fn all_pass(v: &[Verdict]) {
        for x in v {
            assert!(x.pass, "{x}");
        }
    }

    #[test]
    fn small_suites_pass() {
        all_pass(&spherical_suite(200, 1));
        all_pass(&invert_suite(2, 100, 2).unwrap());
        all_pass(&convexity_suite(2, 500, 3, &[]).unwrap());
        all_pass(&grad_suite(2, 5, 4).unwrap());
    }

    #[test]
    fn target_cluster_counts() {
        let domain = SubspaceBox::new(vec![DATA_BOX.0; 2], vec![DATA_BOX.1; 2]).unwrap();
        all_pass(
            &multistart_suite("gauss2", &TargetMap(Target::Gauss2), &domain, 30, 2, 5).unwrap(),
        );
    }

    #[test]
    fn levels_span_the_rosenbrock_range() {
        let a = spanning_levels(Target::Rosenbrock);
        assert_eq!(a.len(), 3);
        assert!(a[0] > 1.5 && a[2] < 6.0 && a[0] < a[1] && a[1] < a[2]);
    }
}
