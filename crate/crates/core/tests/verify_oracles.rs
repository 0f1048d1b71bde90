use invex::targets::GridSpec;
use invex::verify::{
    composition_grad_check, convexity_probe, fd_grad_check, hausdorff, oracle_level_points,
    random_invex, ConvexityProbe,
};
use ndarray::{ArrayView2, Axis};
use proptest::prelude::*;

#[test]
fn hausdorff_examples() {
    assert_eq!(
        hausdorff(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap(),
        5.0
    );
    let a = vec![vec![0.1, 0.2], vec![-1.0, 0.5]];
    assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    assert!(hausdorff(&a, &[]).is_err());
    assert!(hausdorff(&[], &a).is_err());
}

#[test]
fn convexity_probe_control_cases() {
    let affine = |z: ArrayView2<f64>| z.map_axis(Axis(1), |r| 3.0 * r[0] - r[1] + 0.25);
    let m = convexity_probe(affine, &ConvexityProbe::new(2, 10_000, 1)).unwrap();
    assert!(m.abs() <= 1e-12, "{m}");

    let probe = ConvexityProbe {
        lambda: (0.1, 0.9),
        min_separation: 0.1,
        ..ConvexityProbe::new(3, 10_000, 2)
    };
    let q = convexity_probe(
        |z: ArrayView2<f64>| z.map_axis(Axis(1), |r| r.dot(&r)),
        &probe,
    )
    .unwrap();
    // λ(1−λ)‖z₁−z₂‖² ≥ 0.09 · 0.01.
    assert!(q >= 9e-4 - 1e-15, "{q}");
}

#[test]
fn fd_oracle_examples() {
    let quad = |p: &[f64]| 2.0 * p[0] * p[0] - p[0] * p[1] + 0.5 * p[1] * p[1];
    let p = [0.4, -2.0];
    let g = [4.0 * p[0] - p[1], -p[0] + p[1]];
    assert!(fd_grad_check(quad, &g, &p, 1e-5).unwrap() <= 1e-9);

    let model = random_invex(2, 8);
    let x = [0.15, -0.25];
    let fine = composition_grad_check(&model, &x, 1e-5, 20, 3).unwrap();
    assert!(fine <= 1e-5, "{fine}");
    let coarse = composition_grad_check(&model, &x, 1e-1, 20, 3).unwrap();
    assert!(coarse > fine, "coarse {coarse} fine {fine}");
    assert!(fd_grad_check(quad, &g, &p, 0.0).is_err());
}

#[test]
fn oracle_circle_is_accurate_and_refines() {
    let f = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
    let worst = |m: usize| {
        let c = oracle_level_points(f, 1.0, &GridSpec::square(-2.0, 2.0, m));
        assert!(!c.points.is_empty());
        c.points
            .iter()
            .map(|p| (p[0].hypot(p[1]) - 1.0).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (worst(400), worst(800));
    assert!(coarse < 1e-3, "{coarse}");
    assert!(fine <= coarse, "{fine} > {coarse}");
    assert!(
        oracle_level_points(f, -0.5, &GridSpec::square(-2.0, 2.0, 50))
            .points
            .is_empty()
    );
}

proptest! {
    #[test]
    fn hausdorff_is_symmetric(
        a in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 1..20),
        b in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 1..20),
    ) {
        prop_assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
        prop_assert!(hausdorff(&a, &b).unwrap() >= 0.0);
    }
}
