//! `invex` command-line front end.
//!
//! Every run prints its resolved configuration as one JSON line prefixed with
//! `config ` before doing any work. Errors print `error: <Variant>: ...` and
//! exit with status 1; usage errors exit with status 2 and failed
//! verification with status 3.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::diffnet::row;
use crate::levelset::{
    find_minimum, find_minimum_box, levelset_interpolate, levelset_sample, radius_search,
    region_center, InputProperty, LatentProperty, LatentSpace, LatitudePolicy, LevelPoint,
    MinimizeOptions, MinimumResult, RadiusOptions, SubspaceBox, TargetMap,
};
use crate::model::{AnyModel, CycleVae, InvexModel, ModelKind, TrainConfig, VaeModel};
use crate::store::{export_curve, export_svg, load_model, save_model, ModelArchive};
use crate::targets::{grid_dataset, GridSpec, Target, DATA_BOX};
use crate::verify::{
    convexity_suite, grad_suite, invert_suite, model_multistart_suite, model_roundtrip_suite,
    multistart_suite, oracle_level_points, oracle_suite, spanning_levels, spherical_suite, Verdict,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "invex",
    version,
    about = "Invex property models and level-set tracing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a synthetic target grid and write an archive.
    Train(TrainArgs),
    /// Find the global minimum of a target or trained model.
    Minimize(MinimizeArgs),
    /// Sample a level set along directions from the minimum.
    Levelset(LevelsetArgs),
    /// Walk along a level set between the points in the directions of two inputs.
    Interpolate(InterpolateArgs),
    /// Run the verification probes and print one verdict per line.
    Verify(VerifyArgs),
    /// Write a target's training grid, or a marching-squares contour.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value = "rosenbrock", value_parser = parse_target)]
    target: Target,
    /// Model family: invex, cycle-baseline or cycle-invex.
    #[arg(long, default_value = "invex", value_parser = parse_kind)]
    model: ModelKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    /// Archive path.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-epoch loss CSV.
    #[arg(long)]
    loss: Option<PathBuf>,
}

/// Either a trained model archive or a target evaluated directly.
#[derive(Debug, Args)]
struct Source {
    /// Model archive; when absent the target itself is used.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "rosenbrock", value_parser = parse_target)]
    target: Target,
}

#[derive(Debug, Args)]
struct MinimizeArgs {
    #[command(flatten)]
    source: Source,
    /// Input-space box `lo1,hi1,lo2,hi2,...` for a constrained search.
    #[arg(long = "box", allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Debug, Args)]
struct LevelsetArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Seeds the sphere directions in more than two dimensions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input region `lo1,hi1,lo2,hi2,...` the level set is traced over
    /// (default: the data box).
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    from: Point,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    to: Point,
    #[arg(long, default_value_t = 32)]
    steps: usize,
    /// Input region `lo1,hi1,lo2,hi2,...` the level set is traced over
    /// (default: the data box).
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Model archive whose trained networks are probed as well.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "rosenbrock", value_parser = parse_target)]
    target: Target,
    /// Comma-separated subset of grad, convexity, invert, roundtrip, oracle, multistart.
    #[arg(long, value_delimiter = ',')]
    suite: Vec<Suite>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Suite {
    Grad,
    Convexity,
    Invert,
    Roundtrip,
    Oracle,
    Multistart,
}

const ALL_SUITES: [Suite; 6] = [
    Suite::Grad,
    Suite::Convexity,
    Suite::Invert,
    Suite::Roundtrip,
    Suite::Oracle,
    Suite::Multistart,
];

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    source: Source,
    /// Contour level; without it the training grid is written.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn parse_target(s: &str) -> std::result::Result<Target, String> {
    Target::parse(s).ok_or_else(|| format!("unknown target `{s}` (rosenbrock, gauss2)"))
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::parse(s)
        .ok_or_else(|| format!("unknown model `{s}` (invex, cycle-baseline, cycle-invex)"))
}

/// Comma-separated coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .and_then(|p| {
            if p.iter().all(|v| v.is_finite()) {
                Ok(Point(p))
            } else {
                Err("coordinates must be finite".into())
            }
        })
}

/// Runs the command line `args` (including the program name) and returns the
/// exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut out = std::io::stdout().lock();
    match run(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main() -> i32 {
    dispatch(std::env::args_os())
}

fn print_config(out: &mut dyn std::io::Write, value: serde_json::Value) -> Result<()> {
    writeln!(out, "config {value}").map_err(io_err)
}

fn io_err(e: std::io::Error) -> Error {
    Error::Usage(format!("cannot write output: {e}"))
}

fn run(cmd: Command, out: &mut dyn std::io::Write) -> Result<i32> {
    match cmd {
        Command::Train(a) => train(a, out),
        Command::Minimize(a) => minimize(a, out),
        Command::Levelset(a) => levelset(a, out),
        Command::Interpolate(a) => interpolate(a, out),
        Command::Verify(a) => return verify(a, out),
        Command::Export(a) => export(a, out),
    }
    .map(|()| 0)
}

fn train(a: TrainArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        seed: a.seed,
        epochs: a.epochs.unwrap_or(defaults.epochs),
        ..defaults
    };
    cfg.validate()?;
    let grid = GridSpec::training();
    print_config(
        out,
        json!({
            "command": "train",
            "target": a.target.name(),
            "model": a.model.name(),
            "grid": grid,
            "train": cfg,
            "out": a.out,
            "loss": a.loss,
        }),
    )?;
    let data = grid_dataset(&grid, a.target)?;
    let (model, report) = crate::model::train_kind(a.model, &data, &cfg)?;
    save_model(&ModelArchive::new(model, cfg), &a.out)?;
    if let Some(path) = &a.loss {
        let file = fs::File::create(path).map_err(|e| crate::store::StoreError::io(path, e))?;
        report.write_csv(file)?;
    }
    writeln!(
        out,
        "trained {} epochs: property mse {:e} -> {:e}",
        report.rows.len(),
        report.initial_mse,
        report.final_mse
    )
    .map_err(io_err)
}

/// A query subject: a target, or an archived model of either family.
enum Subject {
    Target(Target),
    Invex(Box<InvexModel>),
    Cycle(Box<CycleVae>),
}

impl Subject {
    fn load(src: &Source) -> Result<Self> {
        Ok(match &src.model {
            None => Subject::Target(src.target),
            Some(p) => match load_model(p)?.model {
                AnyModel::Invex(m) => Subject::Invex(Box::new(m)),
                AnyModel::Cycle(m) => Subject::Cycle(Box::new(m)),
            },
        })
    }

    fn describe(&self, src: &Source) -> serde_json::Value {
        match (self, &src.model) {
            (Subject::Target(t), _) => json!({ "target": t.name() }),
            (s, Some(p)) => json!({ "model": p, "kind": s.kind().map(|k| k.name()) }),
            (_, None) => serde_json::Value::Null,
        }
    }

    fn kind(&self) -> Option<ModelKind> {
        match self {
            Subject::Target(_) => None,
            Subject::Invex(m) => Some(m.kind()),
            Subject::Cycle(m) => Some(m.kind()),
        }
    }

    /// Runs `f` on the space level sets are traced in: the plane for a
    /// target, the latent space for a model with a quasi-convex property map.
    fn with_space<R>(&self, f: impl FnOnce(&dyn LatentSpace) -> Result<R>) -> Result<R> {
        match self {
            Subject::Target(t) => f(&TargetMap(*t)),
            Subject::Invex(m) => f(&LatentProperty::new(m.as_ref())),
            Subject::Cycle(m) if m.kind() == ModelKind::CycleInvex => {
                f(&LatentProperty::new(m.as_ref()))
            }
            Subject::Cycle(_) => Err(Error::Usage(
                "level sets need a model with a convex property map (invex or cycle-invex)".into(),
            )),
        }
    }
}

/// Input region from `--region`, or the data box in every coordinate.
fn region_of(text: Option<&str>, dim: usize) -> Result<SubspaceBox> {
    let b = match text {
        Some(s) => SubspaceBox::parse(s)?,
        None => SubspaceBox::new(vec![DATA_BOX.0; dim], vec![DATA_BOX.1; dim])?,
    };
    if b.dim() != dim {
        return Err(Error::Usage(format!(
            "--region has {} dimensions, the model has {dim}",
            b.dim()
        )));
    }
    Ok(b)
}

/// Escape radius for unconstrained minimum searches from the CLI.
const ESCAPE_RADIUS: f64 = 1e3;

/// Global minimum in the tracing space, started from the centre of the data box.
fn global_minimum(space: &dyn LatentSpace, opts: &MinimizeOptions) -> Result<MinimumResult> {
    let mid = (DATA_BOX.0 + DATA_BOX.1) / 2.0;
    let x0 = row(&vec![mid; space.dim()]);
    let z0 = space.to_latent(x0.view())?;
    Ok(find_minimum(
        space,
        z0.row(0).as_slice().expect("contiguous row"),
        opts,
    )?)
}

fn minimize(a: MinimizeArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let subject = Subject::load(&a.source)?;
    let opts = MinimizeOptions {
        escape_radius: Some(ESCAPE_RADIUS),
        ..MinimizeOptions::default()
    };
    let bounds = a.bounds.as_deref().map(SubspaceBox::parse).transpose()?;
    print_config(
        out,
        json!({
            "command": "minimize",
            "subject": subject.describe(&a.source),
            "box": bounds.as_ref().map(|b| json!({"lower": b.lower(), "upper": b.upper()})),
            "minimize": opts,
        }),
    )?;
    let (x, min) = match &bounds {
        Some(b) => {
            let r = match &subject {
                Subject::Target(t) => find_minimum_box(&TargetMap(*t), b, None, &opts)?,
                Subject::Invex(m) => {
                    find_minimum_box(&InputProperty::new(m.as_ref()), b, None, &opts)?
                }
                Subject::Cycle(m) => {
                    find_minimum_box(&InputProperty::new(m.as_ref()), b, None, &opts)?
                }
            };
            (r.z.clone(), r)
        }
        None => {
            let r = subject.with_space(|s| global_minimum(s, &opts));
            let r = match (r, &subject) {
                (Ok(r), _) => r,
                (Err(_), Subject::Cycle(m)) => {
                    let b = SubspaceBox::new(
                        vec![DATA_BOX.0; m.input_dim()],
                        vec![DATA_BOX.1; m.input_dim()],
                    )?;
                    let r = find_minimum_box(&InputProperty::new(m.as_ref()), &b, None, &opts)?;
                    return write_min(out, &r.z.clone(), &r);
                }
                (Err(e), _) => return Err(e),
            };
            let x = subject.with_space(|s| Ok(s.to_input(row(&r.z).view())?.row(0).to_vec()))?;
            (x, r)
        }
    };
    write_min(out, &x, &min)
}

fn write_min(out: &mut dyn std::io::Write, x: &[f64], r: &MinimumResult) -> Result<()> {
    let v = json!({
        "x": x,
        "z": r.z,
        "value": r.value,
        "grad_norm": r.grad_norm,
        "iterations": r.iterations,
        "status": format!("{:?}", r.status),
    });
    writeln!(out, "minimum {v}").map_err(io_err)
}

fn sphere_policy(dim: usize, seed: u64) -> LatitudePolicy {
    if dim > 2 {
        LatitudePolicy::UniformSphere { seed }
    } else {
        LatitudePolicy::equator(dim)
    }
}

fn write_points(points: &[LevelPoint], csv: Option<&Path>, svg: Option<&Path>) -> Result<()> {
    if let Some(p) = csv {
        export_curve(points, p)?;
    }
    if let Some(p) = svg {
        let line: Vec<[f64; 2]> = points
            .iter()
            .filter(|q| q.x.len() >= 2)
            .map(|q| [q.x[0], q.x[1]])
            .collect();
        export_svg(&[line], [DATA_BOX, DATA_BOX], p)?;
    }
    Ok(())
}

fn summarise(
    out: &mut dyn std::io::Write,
    what: &str,
    alpha: f64,
    points: &[LevelPoint],
) -> Result<()> {
    let worst = points
        .iter()
        .map(|p| (p.value - alpha).abs())
        .fold(0.0, f64::max);
    writeln!(
        out,
        "{what} {} points, max |F - alpha| = {worst:e}",
        points.len()
    )
    .map_err(io_err)
}

fn levelset(a: LevelsetArgs, out: &mut dyn std::io::Write) -> Result<()> {
    if a.samples == 0 {
        return Err(Error::Usage("--samples must be positive".into()));
    }
    let subject = Subject::load(&a.source)?;
    let (mopts, ropts) = (MinimizeOptions::default(), RadiusOptions::default());
    subject.with_space(|space| {
        let policy = sphere_policy(space.dim(), a.seed);
        let region = region_of(a.region.as_deref(), space.dim())?;
        print_config(
            out,
            json!({
                "command": "levelset",
                "subject": subject.describe(&a.source),
                "alpha": a.alpha,
                "samples": a.samples,
                "policy": policy,
                "region": region,
                "minimize": mopts,
                "radius": ropts,
                "out": a.out,
                "svg": a.svg,
            }),
        )?;
        let (center, _) = region_center(space, &region, &mopts)?;
        writeln!(out, "center {}", json!(center)).map_err(io_err)?;
        let points = levelset_sample(space, &center, a.alpha, a.samples, &policy, &ropts)?;
        write_points(&points, a.out.as_deref(), a.svg.as_deref())?;
        summarise(out, "levelset", a.alpha, &points)
    })
}

fn interpolate(a: InterpolateArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let subject = Subject::load(&a.source)?;
    let (mopts, ropts) = (MinimizeOptions::default(), RadiusOptions::default());
    subject.with_space(|space| {
        let d = space.dim();
        if a.from.0.len() != d || a.to.0.len() != d {
            return Err(Error::Usage(format!(
                "--from and --to need {d} coordinates"
            )));
        }
        let region = region_of(a.region.as_deref(), d)?;
        print_config(
            out,
            json!({
                "command": "interpolate",
                "subject": subject.describe(&a.source),
                "alpha": a.alpha,
                "from": a.from,
                "to": a.to,
                "steps": a.steps,
                "region": region,
                "minimize": mopts,
                "radius": ropts,
                "out": a.out,
                "svg": a.svg,
            }),
        )?;
        let (center, _) = region_center(space, &region, &mopts)?;
        writeln!(out, "center {}", json!(center)).map_err(io_err)?;
        // Endpoints: the level-set points in the directions of `from` and `to`.
        let snap = |x: &[f64]| -> Result<Vec<f64>> {
            let z = space.to_latent(row(x).view())?;
            let dir: Vec<f64> = z.row(0).iter().zip(&center.z).map(|(a, b)| a - b).collect();
            let hit = radius_search(space, &center, &dir, a.alpha, &ropts)?;
            Ok(space.to_input(row(&hit.z).view())?.row(0).to_vec())
        };
        let (xa, xb) = (snap(&a.from.0)?, snap(&a.to.0)?);
        let path = levelset_interpolate(space, &center, &xa, &xb, a.alpha, a.steps, &ropts)?;
        write_points(&path.points, a.out.as_deref(), a.svg.as_deref())?;
        summarise(out, "interpolate", a.alpha, &path.points)
    })
}

/// Exit status when every probe ran but at least one verdict failed.
const VERIFY_FAILED: i32 = 3;

fn verify(a: VerifyArgs, out: &mut dyn std::io::Write) -> Result<i32> {
    let suites: Vec<Suite> = if a.suite.is_empty() {
        ALL_SUITES.to_vec()
    } else {
        a.suite.clone()
    };
    let archive = a.model.as_deref().map(load_model).transpose()?;
    print_config(
        out,
        json!({
            "command": "verify",
            "suites": suites,
            "target": a.target.name(),
            "model": a.model,
            "kind": archive.as_ref().map(|r| r.kind.name()),
            "seed": a.seed,
            "out": a.out,
        }),
    )?;
    let model = archive.map(|r| r.model);
    let invex = match &model {
        Some(AnyModel::Invex(m)) => Some(m),
        _ => None,
    };
    let domain = SubspaceBox::new(vec![DATA_BOX.0; 2], vec![DATA_BOX.1; 2])?;
    let mut verdicts: Vec<Verdict> = Vec::new();
    for suite in &suites {
        let before = verdicts.len();
        match suite {
            Suite::Grad => verdicts.extend(grad_suite(50, 20, a.seed)?),
            Suite::Invert => {
                verdicts.extend(invert_suite(20, 1000, a.seed)?);
                match &model {
                    Some(AnyModel::Invex(m)) => {
                        verdicts.extend(model_roundtrip_suite("model", m, 1000, a.seed)?)
                    }
                    Some(AnyModel::Cycle(_)) | None => {}
                }
            }
            Suite::Convexity => {
                let trained: Vec<(&str, &crate::diffnet::Icnn)> = match &model {
                    Some(AnyModel::Invex(m)) => vec![("model", m.icnn())],
                    Some(AnyModel::Cycle(m)) => {
                        m.icnn().map(|i| ("model", i)).into_iter().collect()
                    }
                    None => vec![],
                };
                verdicts.extend(convexity_suite(20, 10_000, a.seed, &trained)?);
            }
            Suite::Roundtrip => verdicts.extend(spherical_suite(1000, a.seed)),
            Suite::Multistart => {
                let expected = match a.target {
                    Target::Rosenbrock => 1,
                    Target::Gauss2 => 2,
                };
                verdicts.extend(multistart_suite(
                    a.target.name(),
                    &TargetMap(a.target),
                    &domain,
                    100,
                    expected,
                    a.seed,
                )?);
                if let Some(m) = invex {
                    verdicts.extend(model_multistart_suite("model", m, &domain, 100, a.seed)?);
                }
            }
            Suite::Oracle => {
                if let Some(m) = invex {
                    verdicts.extend(oracle_suite(m, a.target, &spanning_levels(a.target), 256)?);
                }
            }
        }
        if verdicts.len() == before {
            writeln!(out, "SKIP {suite:?}: needs a trained invex model (--model)")
                .map_err(io_err)?;
        }
        for v in &verdicts[before..] {
            writeln!(out, "{v}").map_err(io_err)?;
        }
    }
    if let Some(p) = &a.out {
        let text = serde_json::to_string_pretty(&verdicts).expect("verdicts serialise");
        fs::write(p, text).map_err(|e| crate::store::StoreError::io(p, e))?;
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    writeln!(out, "{} verdicts, {failed} failed", verdicts.len()).map_err(io_err)?;
    Ok(if failed > 0 { VERIFY_FAILED } else { 0 })
}

fn export(a: ExportArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let subject = Subject::load(&a.source)?;
    let grid = match a.alpha {
        Some(_) => crate::verify::oracle_grid(),
        None => GridSpec::training(),
    };
    print_config(
        out,
        json!({
            "command": "export",
            "subject": subject.describe(&a.source),
            "alpha": a.alpha,
            "grid": grid,
            "out": a.out,
            "svg": a.svg,
        }),
    )?;
    let f = |p: [f64; 2]| -> f64 {
        match &subject {
            Subject::Target(t) => t.eval(p),
            Subject::Invex(m) => m.invex_property(&p).expect("finite grid point"),
            Subject::Cycle(m) => crate::model::Evaluator::new(m.as_ref())
                .property(row(&p).view())
                .expect("finite grid point")[0],
        }
    };
    let Some(alpha) = a.alpha else {
        let target = match subject {
            Subject::Target(t) => t,
            _ => {
                return Err(Error::Usage(
                    "exporting a training grid needs --target without --model".into(),
                ))
            }
        };
        let file = fs::File::create(&a.out).map_err(|e| crate::store::StoreError::io(&a.out, e))?;
        grid_dataset(&grid, target)?.write_csv(file)?;
        return writeln!(out, "wrote {} rows", grid.len()).map_err(io_err);
    };
    let curve = oracle_level_points(f, alpha, &grid);
    let mut w = csv::Writer::from_path(&a.out)
        .map_err(|e| Error::Usage(format!("{}: {e}", a.out.display())))?;
    let werr = |e: csv::Error| Error::Usage(format!("{e}"));
    w.write_record(["x1", "x2"]).map_err(werr)?;
    for p in &curve.points {
        w.write_record([format!("{:.16e}", p[0]), format!("{:.16e}", p[1])])
            .map_err(werr)?;
    }
    w.flush()
        .map_err(|e| crate::store::StoreError::io(&a.out, e))?;
    if let Some(svg) = &a.svg {
        let lines: Vec<Vec<[f64; 2]>> = curve
            .segments
            .iter()
            .map(|&(i, j)| vec![curve.points[i], curve.points[j]])
            .collect();
        if !lines.is_empty() {
            export_svg(&lines, [DATA_BOX, DATA_BOX], svg)?;
        }
    }
    writeln!(
        out,
        "contour {} points, {} segments",
        curve.points.len(),
        curve.segments.len()
    )
    .map_err(io_err)
}
