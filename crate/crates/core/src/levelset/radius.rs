//! Radius line-search along rays from the minimiser.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    check_dim, find_minimum, find_minimum_box, BatchMap, LevelSetError, MinimizeOptions,
    MinimumResult, SubspaceBox,
};

/// The minimiser `z*` and its value.
///
/// With a `domain`, `z*` is the minimiser over that box and rays end where
/// they leave it. Along any ray from `z*` that stays in the box the map is
/// still strictly increasing, so the level set inside the box keeps its
/// radial parameterisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub z: Vec<f64>,
    pub value: f64,
    #[serde(default)]
    pub domain: Option<SubspaceBox>,
}

impl Center {
    pub fn from_minimum(m: &MinimumResult) -> Self {
        Self {
            z: m.z.clone(),
            value: m.value,
            domain: None,
        }
    }

    pub fn at(map: &dyn BatchMap, z: &[f64]) -> Result<Self, LevelSetError> {
        Ok(Self {
            z: z.to_vec(),
            value: map.value_at(z)?,
            domain: None,
        })
    }

    /// Minimises from `start`, over `domain` when given.
    pub fn locate(
        map: &dyn BatchMap,
        start: &[f64],
        domain: Option<&SubspaceBox>,
        opts: &MinimizeOptions,
    ) -> Result<(Self, MinimumResult), LevelSetError> {
        let m = match domain {
            Some(b) => find_minimum_box(map, b, Some(start), opts)?,
            None => find_minimum(map, start, opts)?,
        };
        let c = Self {
            domain: domain.cloned(),
            ..Self::from_minimum(&m)
        };
        Ok((c, m))
    }

    /// Distance from `z*` to the edge of the domain along unit vector `u`.
    fn exit_radius(&self, u: &[f64]) -> f64 {
        let Some(b) = &self.domain else {
            return f64::INFINITY;
        };
        let mut t = f64::INFINITY;
        for (((&c, &ui), &lo), &hi) in self.z.iter().zip(u).zip(b.lower()).zip(b.upper()) {
            if ui > 0.0 {
                t = t.min((hi - c) / ui);
            } else if ui < 0.0 {
                t = t.min((lo - c) / ui);
            }
        }
        t.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusOptions {
    /// Accept `|F − α| ≤ tol·(1 + |α|)`.
    pub tol: f64,
    /// First bracketing radius; doubled until the level is exceeded.
    pub r_start: f64,
    pub r_max: f64,
    pub max_bisect: usize,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            r_start: 1e-3,
            r_max: 1e3,
            max_bisect: 200,
        }
    }
}

impl RadiusOptions {
    pub fn validate(&self) -> Result<(), LevelSetError> {
        if !(self.tol > 0.0 && self.r_start > 0.0 && self.r_max > 0.0) {
            return Err(LevelSetError::InvalidQuery(
                "tolerance and radii must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn accepts(&self, value: f64, alpha: f64) -> bool {
        (value - alpha).abs() <= self.tol * (1.0 + alpha.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusHit {
    pub r: f64,
    pub z: Vec<f64>,
    pub value: f64,
    /// Bracketing plus bisection evaluations.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reachability {
    Reachable,
    Unreachable,
    /// The level set is the single point `z*`.
    Degenerate,
}

/// Classifies `α` against the value at the minimiser.
pub fn level_reachable(
    map: &dyn BatchMap,
    z_star: &[f64],
    alpha: f64,
) -> Result<Reachability, LevelSetError> {
    let v = map.value_at(z_star)?;
    Ok(if alpha > v {
        Reachability::Reachable
    } else if alpha == v {
        Reachability::Degenerate
    } else {
        Reachability::Unreachable
    })
}

/// Radius at which the ray from `center` along `direction` meets level `α`.
pub fn radius_search(
    map: &dyn BatchMap,
    center: &Center,
    direction: &[f64],
    alpha: f64,
    opts: &RadiusOptions,
) -> Result<RadiusHit, LevelSetError> {
    Ok(
        radius_search_many(map, center, &[direction.to_vec()], alpha, opts)?
            .pop()
            .expect("one direction"),
    )
}

enum Phase {
    /// Next radius to try and the last radius known to be below the level.
    Bracket {
        r: f64,
        below: f64,
    },
    Bisect {
        lo: f64,
        hi: f64,
        n: usize,
    },
    Done(Result<RadiusHit, LevelSetError>),
}

/// [`radius_search`] for many directions, evaluated as one batch per round.
///
/// Directions need not be unit length; they are normalised first. The first
/// failing direction fails the whole call.
pub fn radius_search_many(
    map: &dyn BatchMap,
    center: &Center,
    directions: &[Vec<f64>],
    alpha: f64,
    opts: &RadiusOptions,
) -> Result<Vec<RadiusHit>, LevelSetError> {
    radius_search_each(map, center, directions, alpha, opts)?
        .into_iter()
        .collect()
}

/// Per-direction outcomes of [`radius_search_many`].
///
/// The outer error covers invalid queries and evaluation failures; the inner
/// ones are `LevelBeyondRange`, `OutsideSubspace` and bisection failures of
/// single directions.
pub fn radius_search_each(
    map: &dyn BatchMap,
    center: &Center,
    directions: &[Vec<f64>],
    alpha: f64,
    opts: &RadiusOptions,
) -> Result<Vec<Result<RadiusHit, LevelSetError>>, LevelSetError> {
    opts.validate()?;
    check_dim(map, center.z.len())?;
    if !alpha.is_finite() {
        return Err(LevelSetError::InvalidQuery("level must be finite".into()));
    }
    if alpha <= center.value {
        return Err(LevelSetError::LevelNotReachable {
            alpha,
            minimum: center.value,
        });
    }
    let d = center.z.len();
    let mut units = Vec::with_capacity(directions.len());
    for u in directions {
        check_dim(map, u.len())?;
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(LevelSetError::InvalidQuery(
                "direction must be a finite non-zero vector".into(),
            ));
        }
        units.push(u.iter().map(|v| v / n).collect::<Vec<_>>());
    }
    let exits: Vec<f64> = units.iter().map(|u| center.exit_radius(u)).collect();
    let point = |k: usize, r: f64| -> Vec<f64> {
        center
            .z
            .iter()
            .zip(&units[k])
            .map(|(c, u)| c + r * u)
            .collect()
    };
    let outside = |r: f64| LevelSetError::OutsideSubspace { alpha, radius: r };

    let mut phases: Vec<Phase> = exits
        .iter()
        .map(|&t| {
            if t > 0.0 {
                Phase::Bracket {
                    r: opts.r_start.min(t),
                    below: 0.0,
                }
            } else {
                Phase::Done(Err(outside(0.0)))
            }
        })
        .collect();
    let mut iters = vec![0usize; units.len()];
    loop {
        let active: Vec<usize> = (0..phases.len())
            .filter(|&k| !matches!(phases[k], Phase::Done(_)))
            .collect();
        if active.is_empty() {
            break;
        }
        let radii: Vec<f64> = active
            .iter()
            .map(|&k| match phases[k] {
                Phase::Bracket { r, .. } => r,
                Phase::Bisect { lo, hi, .. } => 0.5 * (lo + hi),
                Phase::Done(_) => unreachable!(),
            })
            .collect();
        let pts: Vec<Vec<f64>> = active
            .iter()
            .zip(&radii)
            .map(|(&k, &r)| point(k, r))
            .collect();
        let batch = Array2::from_shape_fn((pts.len(), d), |(i, j)| pts[i][j]);
        let values = map.eval(batch.view())?;
        for (j, (&k, pt)) in active.iter().zip(pts).enumerate() {
            let (r, v) = (radii[j], values[j]);
            iters[k] += 1;
            let hit = || {
                Phase::Done(Ok(RadiusHit {
                    r,
                    z: pt.clone(),
                    value: v,
                    iterations: iters[k],
                }))
            };
            let fail = |what| {
                Phase::Done(Err(LevelSetError::NonConvergence {
                    what,
                    iterations: iters[k],
                    residual: (v - alpha).abs(),
                }))
            };
            if !v.is_finite() {
                phases[k] = fail("radius search");
                continue;
            }
            phases[k] = match phases[k] {
                Phase::Bracket { .. } if opts.accepts(v, alpha) => hit(),
                Phase::Bracket { below, .. } if v > alpha => Phase::Bisect {
                    lo: below,
                    hi: r,
                    n: 0,
                },
                Phase::Bracket { .. } => {
                    let next = 2.0 * r;
                    if r >= exits[k] {
                        Phase::Done(Err(outside(r)))
                    } else if next > opts.r_max {
                        Phase::Done(Err(LevelSetError::LevelBeyondRange {
                            alpha,
                            r_max: opts.r_max,
                        }))
                    } else {
                        Phase::Bracket {
                            r: next.min(exits[k]),
                            below: r,
                        }
                    }
                }
                Phase::Bisect { .. } if opts.accepts(v, alpha) => hit(),
                Phase::Bisect { lo, hi, n } => {
                    if n + 1 >= opts.max_bisect || lo == r || hi == r {
                        fail("radius search")
                    } else if v > alpha {
                        Phase::Bisect {
                            lo,
                            hi: r,
                            n: n + 1,
                        }
                    } else {
                        Phase::Bisect {
                            lo: r,
                            hi,
                            n: n + 1,
                        }
                    }
                }
                Phase::Done(_) => unreachable!(),
            };
        }
    }
    Ok(phases
        .into_iter()
        .map(|p| match p {
            Phase::Done(h) => h,
            _ => unreachable!(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::FnMap;

    fn norm2() -> impl BatchMap {
        FnMap::new(
            2,
            |z: &[f64]| z[0] * z[0] + z[1] * z[1],
            |z: &[f64]| vec![2.0 * z[0], 2.0 * z[1]],
        )
    }

    #[test]
    fn analytic_root() {
        let m = norm2();
        let c = Center::at(&m, &[0.0, 0.0]).unwrap();
        for k in 0..12 {
            let a = k as f64 * 0.5;
            let h =
                radius_search(&m, &c, &[a.cos(), a.sin()], 4.0, &RadiusOptions::default()).unwrap();
            assert!((h.r - 2.0).abs() < 1e-6);
            assert!((h.value - 4.0).abs() <= 1e-6 * 5.0);
        }
    }

    #[test]
    fn reachability() {
        let m = norm2();
        let z = [0.0, 0.0];
        assert_eq!(
            level_reachable(&m, &z, 1.0).unwrap(),
            Reachability::Reachable
        );
        assert_eq!(
            level_reachable(&m, &z, -1.0).unwrap(),
            Reachability::Unreachable
        );
        assert_eq!(
            level_reachable(&m, &z, 0.0).unwrap(),
            Reachability::Degenerate
        );
        let c = Center::at(&m, &z).unwrap();
        let e = radius_search(&m, &c, &[1.0, 0.0], -1.0, &RadiusOptions::default()).unwrap_err();
        assert!(matches!(e, LevelSetError::LevelNotReachable { .. }));
    }

    #[test]
    fn beyond_range() {
        let m = FnMap::new(
            1,
            |z: &[f64]| z[0].abs().min(5.0),
            |z: &[f64]| vec![z[0].signum()],
        );
        let c = Center::at(&m, &[0.0]).unwrap();
        let e = radius_search(&m, &c, &[1.0], 6.0, &RadiusOptions::default()).unwrap_err();
        assert!(matches!(e, LevelSetError::LevelBeyondRange { .. }));
    }

    #[test]
    fn domain_cuts_rays() {
        let m = norm2();
        let b = SubspaceBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let (c, _) =
            Center::locate(&m, &[0.5, 0.5], Some(&b), &MinimizeOptions::default()).unwrap();
        let o = RadiusOptions::default();
        let h = radius_search(&m, &c, &[1.0, 0.0], 0.25, &o).unwrap();
        assert!((h.r - 0.5).abs() < 1e-6);
        let e = radius_search(&m, &c, &[1.0, 0.0], 4.0, &o).unwrap_err();
        assert!(matches!(e, LevelSetError::OutsideSubspace { radius, .. } if radius == 1.0));
        // The corner is √2 away along the diagonal.
        let h = radius_search(&m, &c, &[1.0, 1.0], 1.9, &o).unwrap();
        assert!(h.z.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn boundary_minimum_only_looks_inward() {
        let m = FnMap::new(
            2,
            |z: &[f64]| (z[0] - 3.0).powi(2) + z[1] * z[1],
            |z: &[f64]| vec![2.0 * (z[0] - 3.0), 2.0 * z[1]],
        );
        let b = SubspaceBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let (c, min) =
            Center::locate(&m, &[0.0, 0.0], Some(&b), &MinimizeOptions::default()).unwrap();
        assert_eq!(min.z, vec![1.0, 0.0]);
        let dirs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let out = radius_search_each(&m, &c, &dirs, 4.5, &RadiusOptions::default()).unwrap();
        assert!(matches!(out[0], Err(LevelSetError::OutsideSubspace { .. })));
        assert!((out[1].as_ref().unwrap().r - 0.5f64.sqrt()).abs() < 1e-6);
        let inward = out[2].as_ref().unwrap();
        assert!((inward.r - (4.5f64.sqrt() - 2.0)).abs() < 1e-6);
    }
}
