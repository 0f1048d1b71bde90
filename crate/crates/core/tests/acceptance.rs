//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Trained models are cached under the cargo target tmp directory, keyed by
//! their full configuration, so reruns skip training. Delete
//! `target/tmp/acceptance` to retrain. Pass `--sweep` to run the mixture
//! comparison over five seeds instead of one.

use std::f64::consts::TAU;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use invex::diffnet::{Activation, CONDITIONER_ACTIVATION, ICNN_ACTIVATION};
use invex::levelset::{
    latent_domain, levelset_interpolate, levelset_sample, region_center, LatentProperty,
    LatitudePolicy, LevelPoint, MinimizeOptions, RadiusOptions, TargetMap,
};
use invex::model::{
    property_mse, train_kind, AnyModel, CycleArch, InvexArch, InvexModel, ModelKind, TrainConfig,
    TrainReport,
};
use invex::par::{self, ExecMode};
use invex::store::{save_model, ModelArchive};
use invex::targets::{grid_dataset, GridSpec, Target};
use invex::verify::{
    convexity_suite, data_box, grad_suite, invert_suite, model_multistart_suite,
    model_roundtrip_suite, multistart_stationary, oracle_compare_many, spanning_levels,
    spherical_suite, Verdict,
};
use serde::{Deserialize, Serialize};

/// Epochs of the cycle baseline in the mixture comparison. Each baseline
/// epoch costs about seven invex epochs on one core.
const BASELINE_EPOCHS: usize = 150;
const TRAIN_BUDGET_SECS: f64 = 600.0;

#[derive(Serialize, Deserialize)]
struct Cached {
    key: String,
    archive: ModelArchive,
    report: TrainReport,
    seconds: f64,
}

fn cache_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).expect("cache directory");
    dir
}

/// Trains (or loads) a model of `kind` on `target`.
fn trained(kind: ModelKind, target: Target, cfg: &TrainConfig) -> Cached {
    let key = serde_json::to_string(&(
        env!("CARGO_PKG_VERSION"),
        kind,
        target.name(),
        cfg,
        GridSpec::training(),
        InvexArch::new(2),
        CycleArch::baseline(2),
    ))
    .unwrap();
    let path = cache_dir().join(format!(
        "{}-{}-seed{}-e{}.json",
        kind.name(),
        target.name(),
        cfg.seed,
        cfg.epochs
    ));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(c) = serde_json::from_str::<Cached>(&text) {
            if c.key == key {
                return c;
            }
        }
    }
    eprintln!(
        "training {} on {} (seed {}, {} epochs)",
        kind.name(),
        target.name(),
        cfg.seed,
        cfg.epochs
    );
    let data = grid_dataset(&GridSpec::training(), target).unwrap();
    let t0 = Instant::now();
    let (model, report) = train_kind(kind, &data, cfg).unwrap();
    let c = Cached {
        key,
        archive: ModelArchive::new(model, cfg.clone()),
        report,
        seconds: t0.elapsed().as_secs_f64(),
    };
    fs::write(&path, serde_json::to_string(&c).unwrap()).unwrap();
    c
}

fn invex_of(c: &Cached) -> &InvexModel {
    match &c.archive.model {
        AnyModel::Invex(m) => m,
        AnyModel::Cycle(_) => panic!("expected an invex model"),
    }
}

fn default_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..TrainConfig::default()
    }
}

fn verdicts(v: &[Verdict]) -> (bool, String) {
    let pass = v.iter().all(|x| x.pass);
    let detail = v
        .iter()
        .map(|x| {
            format!(
                "{}={:.3e}{}",
                x.name,
                x.value,
                if x.pass { "" } else { "!" }
            )
        })
        .collect::<Vec<_>>()
        .join(" ");
    (pass, detail)
}

fn crit_gradients() -> (bool, String) {
    let t0 = Instant::now();
    let v = grad_suite(50, 20, 1).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let (pass, detail) = verdicts(&v);
    (
        pass && secs < 60.0,
        format!("{detail} runtime={secs:.1}s (< 60s)"),
    )
}

fn crit_bijectivity() -> (bool, String) {
    let mut v = invert_suite(20, 1000, 2).unwrap();
    for target in [Target::Rosenbrock, Target::Gauss2] {
        let c = trained(ModelKind::Invex, target, &default_cfg(0));
        v.extend(
            model_roundtrip_suite(&format!("trained-{}", target.name()), invex_of(&c), 1000, 3)
                .unwrap(),
        );
    }
    verdicts(&v)
}

fn crit_convexity() -> (bool, String) {
    let ros = trained(ModelKind::Invex, Target::Rosenbrock, &default_cfg(0));
    let mix = trained(ModelKind::Invex, Target::Gauss2, &default_cfg(0));
    let trained = [
        ("trained-rosenbrock", invex_of(&ros).icnn()),
        ("trained-gauss2", invex_of(&mix).icnn()),
    ];
    verdicts(&convexity_suite(20, 10_000, 4, &trained).unwrap())
}

fn crit_invexity() -> (bool, String) {
    let mut v = Vec::new();
    for target in [Target::Rosenbrock, Target::Gauss2] {
        let c = trained(ModelKind::Invex, target, &default_cfg(0));
        v.extend(
            model_multistart_suite(
                &format!("trained-{}", target.name()),
                invex_of(&c),
                &data_box(),
                100,
                5,
            )
            .unwrap(),
        );
    }
    verdicts(&v)
}

fn crit_spherical() -> (bool, String) {
    verdicts(&spherical_suite(1000, 6))
}

fn crit_rosenbrock() -> (bool, String) {
    let c = trained(ModelKind::Invex, Target::Rosenbrock, &default_cfg(0));
    let model = invex_of(&c);
    let mut pass = c.seconds <= TRAIN_BUDGET_SECS;
    let mut detail = format!(
        "train={:.0}s epochs={} mse {:.3e}->{:.3e};",
        c.seconds,
        c.report.rows.len(),
        c.report.initial_mse,
        c.report.final_mse
    );
    for o in oracle_compare_many(
        model,
        Target::Rosenbrock,
        &spanning_levels(Target::Rosenbrock),
        2048,
    )
    .unwrap()
    {
        let alpha = o.alpha;
        let a_ok = o.level_error <= 1e-6 * (1.0 + alpha.abs());
        let b_ok = o.to_target_oracle <= 0.05;
        pass &= a_ok && b_ok;
        detail.push_str(&format!(
            " alpha={alpha:.3}: |F-a|={:.1e}{} H(truth)={:.4}{} H(own)={:.4} (2 cells={:.4});",
            o.level_error,
            if a_ok { "" } else { "!" },
            o.to_target_oracle,
            if b_ok { "" } else { "!" },
            o.to_model_oracle,
            2.0 * o.cell
        ));
    }
    (pass, detail)
}

fn crit_interpolation() -> (bool, String) {
    let c = trained(ModelKind::Invex, Target::Rosenbrock, &default_cfg(0));
    let model = invex_of(&c);
    let space = LatentProperty::new(model);
    let (center, _) = region_center(&space, &data_box(), &MinimizeOptions::default()).unwrap();
    let alpha = spanning_levels(Target::Rosenbrock)[1];
    let opts = RadiusOptions::default();
    let pts = levelset_sample(
        &space,
        &center,
        alpha,
        64,
        &LatitudePolicy::equator(2),
        &opts,
    )
    .unwrap();
    // Directions whose ray leaves the latent box are skipped, so take both
    // endpoints from the longest unbroken arc of samples, less than half a turn apart.
    let run = longest_run(&pts, 64);
    let span = (run.len() - 1).min(31);
    let (a, b) = (
        &pts[run[(run.len() - 1 - span) / 2]],
        &pts[run[(run.len() - 1 - span) / 2 + span]],
    );
    let path = levelset_interpolate(&space, &center, &a.x, &b.x, alpha, 32, &opts).unwrap();
    let worst = path
        .points
        .iter()
        .map(|p| (p.value - alpha).abs())
        .fold(0.0, f64::max);
    let endpoint = path.points[0]
        .x
        .iter()
        .zip(&a.x)
        .chain(path.points[31].x.iter().zip(&b.x))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    let bound = 1e-6 * (1.0 + alpha.abs());
    (
        path.points.len() == 32 && worst <= bound && endpoint == 0.0,
        format!("alpha={alpha:.3} steps={} max|F-a|={worst:.2e} (<= {bound:.1e}) endpoint error={endpoint:e}", path.points.len()),
    )
}

/// Indices of the longest run of consecutive equator samples, following the
/// azimuth order and wrapping around the circle.
fn longest_run(pts: &[LevelPoint], count: usize) -> Vec<usize> {
    let slot =
        |p: &LevelPoint| (p.azimuth.rem_euclid(TAU) / TAU * count as f64).round() as usize % count;
    let slots: Vec<usize> = pts.iter().map(slot).collect();
    let adjacent = |i: usize| slots[(i + 1) % slots.len()] == (slots[i] + 1) % count;
    let n = slots.len();
    if (0..n).all(adjacent) {
        return (0..n).collect();
    }
    let mut best: Vec<usize> = vec![0];
    for start in 0..n {
        if adjacent((start + n - 1) % n) {
            continue;
        }
        let mut run = vec![start];
        while adjacent(*run.last().unwrap()) {
            run.push((run.last().unwrap() + 1) % n);
        }
        if run.len() > best.len() {
            best = run;
        }
    }
    best
}

fn crit_mixture(seeds: &[u64]) -> (bool, String) {
    let data = grid_dataset(&GridSpec::training(), Target::Gauss2).unwrap();
    let truth = multistart_stationary(
        &TargetMap(Target::Gauss2),
        &data_box(),
        100,
        1e-2,
        7,
        &MinimizeOptions::default(),
    )
    .unwrap()
    .cluster_count();
    let mut pass = truth == 2;
    let mut detail = format!("target clusters={truth};");
    for &seed in seeds {
        let inv = trained(ModelKind::Invex, Target::Gauss2, &default_cfg(seed));
        let base_cfg = TrainConfig {
            epochs: BASELINE_EPOCHS,
            ..default_cfg(seed)
        };
        let base = trained(ModelKind::CycleBaseline, Target::Gauss2, &base_cfg);
        let inv_mse = property_mse(invex_of(&inv), &data).unwrap();
        let base_mse = match &base.archive.model {
            AnyModel::Cycle(m) => property_mse(m, &data).unwrap(),
            AnyModel::Invex(_) => unreachable!(),
        };
        let space = LatentProperty::new(invex_of(&inv));
        let latent = latent_domain(&space, &data_box(), 0.0).unwrap();
        let clusters =
            multistart_stationary(&space, &latent, 100, 1e-2, 8, &MinimizeOptions::default())
                .unwrap()
                .cluster_count();
        let ratio = inv_mse / base_mse;
        pass &= ratio >= 2.0 && clusters == 1;
        detail.push_str(&format!(
            " seed {seed}: mse invex={inv_mse:.3e} baseline={base_mse:.3e} ratio={ratio:.1} invex clusters={clusters};"
        ));
    }
    (pass, detail)
}

fn crit_determinism() -> (bool, String) {
    let data = grid_dataset(&GridSpec::training(), Target::Rosenbrock).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |mode: ExecMode, name: &str| {
        par::set_mode(mode);
        let (model, report) = train_kind(ModelKind::Invex, &data, &cfg).unwrap();
        par::set_mode(ExecMode::Parallel);
        let arc = dir.path().join(format!("{name}.json"));
        save_model(&ModelArchive::new(model, cfg.clone()), &arc).unwrap();
        let mut curve = Vec::new();
        report.write_csv(&mut curve).unwrap();
        (fs::read(&arc).unwrap(), curve)
    };
    let a = run(ExecMode::Parallel, "a");
    let b = run(ExecMode::Parallel, "b");
    let c = run(ExecMode::Sequential, "c");
    let pass = a == b && a == c;
    (
        pass,
        format!(
            "archive {} bytes, loss curve {} bytes; repeat identical={} sequential identical={}",
            a.0.len(),
            a.1.len(),
            a == b,
            a == c
        ),
    )
}

fn crit_defaults() -> (bool, String) {
    let cfg = TrainConfig::default();
    let arch = InvexArch::new(2);
    let base = CycleArch::baseline(2);
    let snapshot = serde_json::json!({
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "beta_anneal_factor": cfg.beta_anneal_factor,
        "beta_anneal_period": cfg.beta_anneal_period,
        "cycle_weight": cfg.cycle_weight,
        "flow_layers": arch.flow_layers,
        "flow_hidden": arch.flow_hidden,
        "flow_activation": CONDITIONER_ACTIVATION,
        "icnn_widths": arch.icnn_widths,
        "icnn_activation": ICNN_ACTIVATION,
        "baseline_encoder": base.encoder_hidden,
        "baseline_decoder": base.decoder_hidden,
        "baseline_activation": base.activation,
    });
    let expected = serde_json::json!({
        "learning_rate": 1e-4,
        "batch_size": 250,
        "beta_anneal_factor": 0.99,
        "beta_anneal_period": 30,
        "cycle_weight": 0.01,
        "flow_layers": 4,
        "flow_hidden": [128],
        "flow_activation": "elu",
        "icnn_widths": [512, 512, 512, 512],
        "icnn_activation": "softplus",
        "baseline_encoder": [1024, 1024],
        "baseline_decoder": [1024, 1024],
        "baseline_activation": "relu",
    });
    let beta_ok = cfg.beta_at(60) == cfg.beta0 * 0.99 * 0.99 && cfg.beta_at(29) == cfg.beta0;
    let pass = snapshot == expected && beta_ok && base.activation == Activation::Relu;
    (pass, format!("{snapshot} beta(60)={}", cfg.beta_at(60)))
}

fn main() {
    let sweep = std::env::args().any(|a| a == "--sweep");
    let mixture_seeds: Vec<u64> = if sweep { (0..5).collect() } else { vec![0] };
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> (bool, String)>)> = vec![
        (1, "gradient suite", Box::new(crit_gradients)),
        (2, "bijectivity suite", Box::new(crit_bijectivity)),
        (3, "strict-convexity suite", Box::new(crit_convexity)),
        (4, "invexity suite", Box::new(crit_invexity)),
        (5, "spherical suite", Box::new(crit_spherical)),
        (6, "rosenbrock reproduction", Box::new(crit_rosenbrock)),
        (7, "interpolation constancy", Box::new(crit_interpolation)),
        (
            8,
            "disconnected level sets",
            Box::new(move || crit_mixture(&mixture_seeds)),
        ),
        (9, "determinism", Box::new(crit_determinism)),
        (10, "defaults parity", Box::new(crit_defaults)),
    ];
    let mut failed = 0;
    for (id, name, check) in &criteria {
        let t0 = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} [PRIMARY] {name}: {} ({:.1}s) {detail}",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
