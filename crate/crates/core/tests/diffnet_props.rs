use invex::diffnet::{
    AutoregressiveFlow, Frozen, Icnn, MonotoneHead, Parameterised, Reparam, Tape, Unary, Var,
};
use invex::verify::{convexity_probe, fd_grad_check, ConvexityProbe, RANDOM_FLOW_SCALE};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(lo..hi))
}

/// Builds a scalar objective from a single input matrix and checks its tape
/// gradient against central differences.
fn check_op(x: Array2<f64>, build: impl Fn(&mut Tape<'_>, Var) -> Var) -> f64 {
    let shape = x.raw_dim();
    let weights = Array2::from_shape_fn((8, 8), |(i, j)| 0.3 + 0.1 * (i + 2 * j) as f64);
    let objective = |flat: &[f64]| {
        let mut t = Tape::new();
        let v = t.variable(Array2::from_shape_vec(shape, flat.to_vec()).unwrap());
        let out = build(&mut t, v);
        let w = t.constant(
            weights
                .slice(ndarray::s![..t.shape(out).0, ..t.shape(out).1])
                .to_owned(),
        );
        let prod = t.mul(out, w);
        let s = t.sum(prod);
        (t.item(s), t.backward(s).wrt(v))
    };
    let flat: Vec<f64> = x.iter().copied().collect();
    let (_, g) = objective(&flat);
    let g: Vec<f64> = g.iter().copied().collect();
    fd_grad_check(|p| objective(p).0, &g, &flat, 1e-6).unwrap()
}

#[test]
fn every_primitive_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = matrix(&mut rng, 3, 4, -1.5, 1.5);
    let positive = matrix(&mut rng, 3, 4, 0.5, 2.0);
    let other = matrix(&mut rng, 3, 4, 0.5, 2.0);
    let right = matrix(&mut rng, 4, 2, -1.0, 1.0);
    let row = matrix(&mut rng, 1, 4, -1.0, 1.0);
    let away_from_kinks = base.mapv(|v: f64| if v.abs() < 0.05 { v + 0.2 } else { v });

    let mut worst: Vec<(&str, f64)> = Vec::new();
    for (name, kind, input) in [
        ("softplus", Unary::Softplus, &base),
        ("elu", Unary::Elu, &away_from_kinks),
        ("relu", Unary::Relu, &away_from_kinks),
        ("tanh", Unary::Tanh, &base),
        ("exp", Unary::Exp, &base),
        ("ln", Unary::Ln, &positive),
        ("square", Unary::Square, &base),
        ("abs", Unary::Abs, &away_from_kinks),
        ("sqrt", Unary::Sqrt, &positive),
    ] {
        worst.push((name, check_op(input.clone(), |t, v| t.unary(kind, v))));
    }
    let (o, r, rw) = (other.clone(), right.clone(), row.clone());
    worst.push((
        "matmul",
        check_op(base.clone(), move |t, v| {
            let w = t.constant(r.clone());
            t.matmul(v, w)
        }),
    ));
    worst.push((
        "add_row_broadcast",
        check_op(base.clone(), move |t, v| {
            let b = t.constant(rw.clone());
            t.add(v, b)
        }),
    ));
    let o2 = o.clone();
    worst.push((
        "sub",
        check_op(base.clone(), move |t, v| {
            let b = t.constant(o2.clone());
            t.sub(b, v)
        }),
    ));
    let o3 = o.clone();
    worst.push((
        "mul",
        check_op(base.clone(), move |t, v| {
            let b = t.constant(o3.clone());
            t.mul(v, b)
        }),
    ));
    worst.push((
        "div",
        check_op(positive.clone(), move |t, v| {
            let b = t.constant(o.clone());
            t.div(b, v)
        }),
    ));
    worst.push(("self_mul", check_op(base.clone(), |t, v| t.mul(v, v))));
    worst.push((
        "scale_offset_neg",
        check_op(base.clone(), |t, v| {
            let s = t.scale(v, -2.5);
            let s = t.offset(s, 0.7);
            t.neg(s)
        }),
    ));
    worst.push(("sum_rows", check_op(base.clone(), |t, v| t.sum_rows(v))));
    worst.push(("sum_cols", check_op(base.clone(), |t, v| t.sum_cols(v))));
    worst.push((
        "cols_concat_permute",
        check_op(base.clone(), |t, v| {
            let a = t.cols(v, 0, 1);
            let b = t.cols(v, 2, 2);
            let c = t.concat(&[b, a, v]);
            t.permute_cols(c, &[6, 5, 4, 3, 2, 1, 0])
        }),
    ));
    for (name, e) in worst {
        assert!(e <= 1e-5, "{name}: {e}");
    }
}

#[test]
fn default_width_icnn_is_strictly_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let icnn = Icnn::new(2, &[512; 4], &mut rng);
    let frozen = Frozen::new(&icnn);
    let probe = ConvexityProbe {
        lo: -3.0,
        hi: 3.0,
        lambda: (0.1, 0.9),
        min_separation: 1e-3,
        ..ConvexityProbe::new(2, 10_000, 4)
    };
    let margin = convexity_probe(|z| frozen.eval(z).unwrap(), &probe).unwrap();
    assert!(margin > 1e-12, "{margin}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_icnns_are_strictly_convex(seed in any::<u64>(), dim in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let icnn = Icnn::new(dim, &[24, 24, 24], &mut rng);
        let frozen = Frozen::new(&icnn);
        let probe = ConvexityProbe {
            lo: -3.0,
            hi: 3.0,
            lambda: (0.1, 0.9),
            min_separation: 1e-2,
            ..ConvexityProbe::new(dim, 2000, seed)
        };
        let margin = convexity_probe(|z| frozen.eval(z).unwrap(), &probe).unwrap();
        prop_assert!(margin > 1e-12, "margin {}", margin);
    }

    #[test]
    fn constrained_weights_stay_positive(seed in any::<u64>(), spread in 1.0f64..700.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut icnn = Icnn::new(2, &[6, 5, 4], &mut rng);
        let kinds = icnn.reparams();
        for (p, kind) in icnn.params_mut().into_iter().zip(kinds) {
            if kind == Reparam::Softplus {
                p.mapv_inplace(|_| rng.random_range(-spread..spread));
            }
        }
        for w in icnn.effective_wc() {
            prop_assert!(w.iter().all(|&v| v > 0.0));
        }
        prop_assert!(icnn.effective_out_c().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn monotone_head_slope_is_positive(a in -10.0f64..10.0, b in -10.0f64..10.0, t in -20.0f64..20.0) {
        let g = MonotoneHead::from_raw(a, b);
        let h = 1e-4;
        prop_assert!(g.eval(t + h) > g.eval(t - h));
        prop_assert!(g.derivative(t) > 0.0);
    }

    #[test]
    fn random_flows_round_trip(seed in any::<u64>(), dim in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flow = AutoregressiveFlow::random(dim, &[32], 4, RANDOM_FLOW_SCALE, &mut rng);
        let frozen = Frozen::new(&flow);
        let x = matrix(&mut rng, 200, dim, -3.0, 3.0);
        let back = frozen.inverse(frozen.forward(x.view()).unwrap().view()).unwrap();
        let err = back.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-8, "round trip {}", err);
    }
}
