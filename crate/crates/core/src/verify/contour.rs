//! Marching-squares contour oracle.

use serde::{Deserialize, Serialize};

use crate::par;
use crate::targets::GridSpec;

/// Crossings of `f = α` on a planar grid, joined into cell segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCurve {
    pub alpha: f64,
    /// Grid points per axis.
    pub resolution: usize,
    pub points: Vec<[f64; 2]>,
    /// Index pairs into `points`, one per cell crossing.
    pub segments: Vec<(usize, usize)>,
}

impl OracleCurve {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Marching squares over `grid` with linear interpolation along cell edges.
///
/// Cells whose corners alternate in sign are resolved by the sign of the
/// corner average at the cell centre. A level outside the sampled range gives
/// an empty curve.
pub fn oracle_level_points<F>(f: F, alpha: f64, grid: &GridSpec) -> OracleCurve
where
    F: Fn([f64; 2]) -> f64 + Sync + Send,
{
    assert_eq!(grid.ranges.len(), 2, "marching squares needs a planar grid");
    let coords = grid.points_along(1);
    let values = grid_values(|x1| coords.iter().map(|&x2| f([x1, x2])).collect(), grid);
    contour_of_values(&values, alpha, grid)
}

/// `values[i][j] = f(x1_i, x2_j)` on a planar grid, one `column(x1_i)` call
/// per row.
pub fn grid_values<F>(column: F, grid: &GridSpec) -> Vec<Vec<f64>>
where
    F: Fn(f64) -> Vec<f64> + Sync + Send,
{
    assert_eq!(grid.ranges.len(), 2, "marching squares needs a planar grid");
    let x1 = grid.points_along(0);
    par::map_indices(grid.points, |i| column(x1[i]))
}

/// [`oracle_level_points`] on values already sampled by [`grid_values`].
pub fn contour_of_values(values: &[Vec<f64>], alpha: f64, grid: &GridSpec) -> OracleCurve {
    assert_eq!(grid.ranges.len(), 2, "marching squares needs a planar grid");
    let m = grid.points;
    assert!(
        values.len() == m && values.iter().all(|r| r.len() == m),
        "grid value shape"
    );
    let coords: Vec<Vec<f64>> = (0..2).map(|axis| grid.points_along(axis)).collect();
    // s[i][j] = f(x1_i, x2_j) − α
    let s: Vec<Vec<f64>> = values
        .iter()
        .map(|r| r.iter().map(|v| v - alpha).collect())
        .collect();

    let mut points = Vec::new();
    let cross = |p: [f64; 2], q: [f64; 2], sp: f64, sq: f64| -> Option<[f64; 2]> {
        if (sp >= 0.0) == (sq >= 0.0) {
            return None;
        }
        let t = sp / (sp - sq);
        Some([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])])
    };
    let at = |i: usize, j: usize| [coords[0][i], coords[1][j]];
    // h[i][j]: edge (i,j)–(i+1,j); v[i][j]: edge (i,j)–(i,j+1)
    let mut h = vec![vec![None; m]; m];
    let mut v = vec![vec![None; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 < m {
                if let Some(p) = cross(at(i, j), at(i + 1, j), s[i][j], s[i + 1][j]) {
                    points.push(p);
                    h[i][j] = Some(points.len() - 1);
                }
            }
            if j + 1 < m {
                if let Some(p) = cross(at(i, j), at(i, j + 1), s[i][j], s[i][j + 1]) {
                    points.push(p);
                    v[i][j] = Some(points.len() - 1);
                }
            }
        }
    }

    let mut segments = Vec::new();
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let bottom = h[i][j];
            let right = v[i + 1][j];
            let top = h[i][j + 1];
            let left = v[i][j];
            let found: Vec<usize> = [bottom, right, top, left].into_iter().flatten().collect();
            match found.len() {
                2 => segments.push((found[0], found[1])),
                4 => {
                    let (a, b, c, d) = (s[i][j], s[i + 1][j], s[i + 1][j + 1], s[i][j + 1]);
                    let centre = 0.25 * (a + b + c + d);
                    let (bottom, right, top, left) = (found[0], found[1], found[2], found[3]);
                    if (centre >= 0.0) == (a >= 0.0) {
                        // a and c joined through the centre: cut off b and d.
                        segments.push((bottom, right));
                        segments.push((top, left));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => {}
            }
        }
    }
    OracleCurve {
        alpha,
        resolution: m,
        points,
        segments,
    }
}
