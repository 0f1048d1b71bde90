//! Gradient descent with Armijo backtracking, run in lock-step over many starts.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{check_dim, BatchMap, LevelSetError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Stop once the (projected) gradient norm is at most this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub armijo_c: f64,
    pub initial_step: f64,
    /// Abandon a run once it is further than this from its start.
    #[serde(default)]
    pub escape_radius: Option<f64>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 100_000,
            armijo_c: 1e-4,
            initial_step: 1.0,
            escape_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinStatus {
    Converged,
    /// No representable step decreases the objective or the gradient norm.
    Stalled,
    IterationCap,
    /// Left the escape radius around its start.
    Escaped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumResult {
    pub z: Vec<f64>,
    pub value: f64,
    /// Norm of the gradient, clipped against active bounds when boxed.
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: MinStatus,
}

/// Compact axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SubspaceBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, LevelSetError> {
        let ok = lower.len() == upper.len()
            && !lower.is_empty()
            && lower
                .iter()
                .zip(&upper)
                .all(|(l, u)| l.is_finite() && u.is_finite() && l < u);
        if !ok {
            return Err(LevelSetError::InvalidQuery(
                "box needs finite lower < upper in every dimension".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// Parses `lo1,hi1,lo2,hi2,…`.
    pub fn parse(s: &str) -> Result<Self, LevelSetError> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| LevelSetError::InvalidQuery(format!("box: {e}")))?;
        if v.len() % 2 != 0 {
            return Err(LevelSetError::InvalidQuery("box needs lo,hi pairs".into()));
        }
        Self::new(
            v.iter().step_by(2).copied().collect(),
            v.iter().skip(1).step_by(2).copied().collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn centre(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn project(&self, z: &mut [f64]) {
        for (v, (l, u)) in z.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Gradient with components zeroed where a bound blocks descent.
    pub fn projected_grad(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        g.iter()
            .enumerate()
            .map(|(i, &gi)| {
                if (z[i] <= self.lower[i] && gi > 0.0) || (z[i] >= self.upper[i] && gi < 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn to_rows(points: &[&[f64]], dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), dim), |(i, j)| points[i][j])
}

struct Run {
    start: Vec<f64>,
    z: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    pg_norm: f64,
    step: f64,
    iters: usize,
    status: Option<MinStatus>,
}

enum Trial {
    Pending,
    Accepted,
    /// Objective change at rounding level; decided by the gradient norm.
    Tentative,
    Stalled,
}

/// Minimises from every start, evaluating all unfinished runs as one batch.
///
/// Descent direction is the negative gradient, projected onto `bounds` when
/// given. Each step starts from the Barzilai–Borwein length and halves until
/// the Armijo condition holds. When the required decrease is below the
/// rounding level of the objective, a step is accepted if it lowers the
/// gradient norm instead; a run stalls once its step no longer moves it.
/// Trial points, values or gradients that are not finite count as failed steps.
pub fn minimize_many(
    map: &dyn BatchMap,
    starts: &[Vec<f64>],
    bounds: Option<&SubspaceBox>,
    opts: &MinimizeOptions,
) -> Result<Vec<MinimumResult>, LevelSetError> {
    let d = map.dim();
    if let Some(b) = bounds {
        check_dim(map, b.dim())?;
    }
    let mut runs = Vec::with_capacity(starts.len());
    let mut init = Vec::with_capacity(starts.len());
    for s in starts {
        check_dim(map, s.len())?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(LevelSetError::InvalidQuery(
                "start point is not finite".into(),
            ));
        }
        let mut z = s.clone();
        if let Some(b) = bounds {
            b.project(&mut z);
        }
        init.push(z);
    }
    if init.is_empty() {
        return Ok(vec![]);
    }
    let (f0, g0) =
        map.eval_grad(to_rows(&init.iter().map(Vec::as_slice).collect::<Vec<_>>(), d).view())?;
    for (i, z) in init.into_iter().enumerate() {
        let g = g0.row(i).to_vec();
        let pg = bounds.map_or_else(|| g.clone(), |b| b.projected_grad(&z, &g));
        let pg_norm = norm(&pg);
        runs.push(Run {
            start: z.clone(),
            f: f0[i],
            g,
            pg_norm,
            step: opts.initial_step,
            iters: 0,
            status: (pg_norm <= opts.grad_tol).then_some(MinStatus::Converged),
            z,
        });
    }

    let trial_point = |r: &Run, step: f64| {
        let mut t: Vec<f64> = r.z.iter().zip(&r.g).map(|(z, g)| z - step * g).collect();
        if let Some(b) = bounds {
            b.project(&mut t);
        }
        t
    };

    loop {
        let active: Vec<usize> = (0..runs.len())
            .filter(|&i| runs[i].status.is_none())
            .collect();
        if active.is_empty() {
            break;
        }
        let mut steps: Vec<f64> = active.iter().map(|&i| runs[i].step).collect();
        let mut trials: Vec<Vec<f64>> = vec![vec![]; active.len()];
        let mut state: Vec<Trial> = active.iter().map(|_| Trial::Pending).collect();
        let mut values = vec![0.0; active.len()];

        // Backtracking for every active run at once.
        loop {
            let pending: Vec<usize> = (0..active.len())
                .filter(|&k| matches!(state[k], Trial::Pending))
                .collect();
            if pending.is_empty() {
                break;
            }
            for &k in &pending {
                trials[k] = trial_point(&runs[active[k]], steps[k]);
            }
            let to_eval: Vec<usize> = pending
                .into_iter()
                .filter(|&k| {
                    if trials[k] == runs[active[k]].z {
                        state[k] = Trial::Stalled;
                        false
                    } else if trials[k].iter().any(|v| !v.is_finite()) {
                        steps[k] *= 0.5;
                        false
                    } else {
                        true
                    }
                })
                .collect();
            if to_eval.is_empty() {
                continue;
            }
            let pts: Vec<&[f64]> = to_eval.iter().map(|&k| trials[k].as_slice()).collect();
            let fv = map.eval(to_rows(&pts, d).view())?;
            for (j, &k) in to_eval.iter().enumerate() {
                let r = &runs[active[k]];
                let ft = fv[j];
                let moved: Vec<f64> = trials[k].iter().zip(&r.z).map(|(a, b)| a - b).collect();
                let wanted = opts.armijo_c * dot(&r.g, &moved);
                let noise = 64.0 * f64::EPSILON * (1.0 + r.f.abs());
                values[k] = ft;
                if ft.is_finite() && ft <= r.f + wanted {
                    state[k] = Trial::Accepted;
                } else if ft.is_finite() && wanted.abs() <= noise && (ft - r.f).abs() <= noise {
                    state[k] = Trial::Tentative;
                } else {
                    steps[k] *= 0.5;
                }
            }
        }

        let need_grad: Vec<usize> = (0..active.len())
            .filter(|&k| matches!(state[k], Trial::Accepted | Trial::Tentative))
            .collect();
        let grads = if need_grad.is_empty() {
            None
        } else {
            let pts: Vec<&[f64]> = need_grad.iter().map(|&k| trials[k].as_slice()).collect();
            Some(map.eval_grad(to_rows(&pts, d).view())?.1)
        };
        for (k, &i) in active.iter().enumerate() {
            if matches!(state[k], Trial::Stalled) {
                runs[i].status = Some(MinStatus::Stalled);
            }
        }
        for (j, &k) in need_grad.iter().enumerate() {
            let r = &mut runs[active[k]];
            let g = grads.as_ref().expect("gradients evaluated").row(j).to_vec();
            if g.iter().any(|v| !v.is_finite()) {
                r.step = 0.5 * steps[k];
                continue;
            }
            let pg = bounds.map_or_else(|| g.clone(), |b| b.projected_grad(&trials[k], &g));
            let pg_norm = norm(&pg);
            if matches!(state[k], Trial::Tentative) && !(pg_norm < r.pg_norm) {
                // Retry shorter; the run stalls once the step no longer moves it.
                r.step = 0.5 * steps[k];
                continue;
            }
            let s: Vec<f64> = trials[k].iter().zip(&r.z).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(&r.g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            r.step = if sy > 0.0 {
                dot(&s, &s) / sy
            } else {
                2.0 * steps[k]
            }
            .clamp(1e-20, 1e20);
            r.z = std::mem::take(&mut trials[k]);
            r.f = values[k];
            r.g = g;
            r.pg_norm = pg_norm;
            r.iters += 1;
            let escaped = opts.escape_radius.is_some_and(|e| {
                let moved: Vec<f64> = r.z.iter().zip(&r.start).map(|(a, b)| a - b).collect();
                norm(&moved) > e
            });
            if pg_norm <= opts.grad_tol {
                r.status = Some(MinStatus::Converged);
            } else if escaped {
                r.status = Some(MinStatus::Escaped);
            } else if r.iters >= opts.max_iter {
                r.status = Some(MinStatus::IterationCap);
            }
        }
    }

    Ok(runs
        .into_iter()
        .map(|r| MinimumResult {
            z: r.z,
            value: r.f,
            grad_norm: r.pg_norm,
            iterations: r.iters,
            status: r.status.expect("finished run"),
        })
        .collect())
}

fn single(
    map: &dyn BatchMap,
    start: Vec<f64>,
    bounds: Option<&SubspaceBox>,
    opts: &MinimizeOptions,
) -> Result<MinimumResult, LevelSetError> {
    let r = minimize_many(map, &[start], bounds, opts)?
        .pop()
        .expect("one run");
    match r.status {
        MinStatus::IterationCap => Err(LevelSetError::NonConvergence {
            what: "minimum search",
            iterations: r.iterations,
            residual: r.grad_norm,
        }),
        MinStatus::Escaped => Err(LevelSetError::Unbounded {
            radius: opts.escape_radius.expect("escape needs a radius"),
            iterations: r.iterations,
        }),
        _ => Ok(r),
    }
}

/// Unconstrained minimum from `start`.
///
/// Fails with `NonConvergence` when the iteration cap is hit and with
/// `Unbounded` when the run escapes; a stalled run is returned with its
/// status and gradient norm.
pub fn find_minimum(
    map: &dyn BatchMap,
    start: &[f64],
    opts: &MinimizeOptions,
) -> Result<MinimumResult, LevelSetError> {
    single(map, start.to_vec(), None, opts)
}

/// Minimum over a box by projected gradient descent, started at the box
/// centre unless `start` is given.
pub fn find_minimum_box(
    map: &dyn BatchMap,
    bounds: &SubspaceBox,
    start: Option<&[f64]>,
    opts: &MinimizeOptions,
) -> Result<MinimumResult, LevelSetError> {
    let s = start.map_or_else(|| bounds.centre(), <[f64]>::to_vec);
    single(map, s, Some(bounds), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::FnMap;

    fn bowl(c: [f64; 2]) -> impl BatchMap {
        FnMap::new(
            2,
            move |z: &[f64]| (z[0] - c[0]).powi(2) + (z[1] - c[1]).powi(2),
            move |z: &[f64]| vec![2.0 * (z[0] - c[0]), 2.0 * (z[1] - c[1])],
        )
    }

    #[test]
    fn quadratic_minimum() {
        let m = bowl([0.3, -0.1]);
        let r = find_minimum(&m, &[5.0, 7.0], &MinimizeOptions::default()).unwrap();
        assert_eq!(r.status, MinStatus::Converged);
        assert!(r.grad_norm <= 1e-8);
        assert!((r.z[0] - 0.3).abs() < 1e-6 && (r.z[1] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn box_projection() {
        let m = bowl([2.0, 0.0]);
        let b = SubspaceBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let r = find_minimum_box(&m, &b, None, &MinimizeOptions::default()).unwrap();
        assert_eq!(r.z[0], 1.0);
        assert!(r.z[1].abs() < 1e-9);
        assert!(b.contains(&r.z));
    }

    #[test]
    fn interior_box_minimum_matches_free_minimum() {
        let m = bowl([0.3, -0.1]);
        let b = SubspaceBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let o = MinimizeOptions::default();
        let a = find_minimum_box(&m, &b, None, &o).unwrap();
        let f = find_minimum(&m, &[0.0, 0.0], &o).unwrap();
        assert!((a.z[0] - f.z[0]).abs() < 1e-8 && (a.z[1] - f.z[1]).abs() < 1e-8);
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let m = FnMap::new(
            1,
            |z: &[f64]| (z[0] - 1.0).powi(4) + 1e3 * z[0].sin().powi(2),
            |z: &[f64]| vec![4.0 * (z[0] - 1.0).powi(3) + 2e3 * z[0].sin() * z[0].cos()],
        );
        let o = MinimizeOptions {
            max_iter: 1,
            ..Default::default()
        };
        assert!(matches!(
            find_minimum(&m, &[3.0], &o),
            Err(LevelSetError::NonConvergence { .. })
        ));
    }

    #[test]
    fn bad_boxes() {
        assert!(SubspaceBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(SubspaceBox::parse("0,1,2").is_err());
        let b = SubspaceBox::parse("-1,1,0,2").unwrap();
        assert_eq!(b.upper(), &[1.0, 2.0]);
    }
}
