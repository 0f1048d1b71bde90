//! Synthetic ground-truth properties on the plane and grid datasets.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::model::{LabelledDataset, ModelError};

/// Per-axis extent of the synthetic datasets.
pub const DATA_BOX: (f64, f64) = (-0.4, 0.4);

/// Modified Rosenbrock function `⁴√((1 − 10x₁)² + 100·(10(x₂ − x₁²))²)`.
///
/// Its minimum 0 sits at `(0.1, 0.01)`.
pub fn rosenbrock_eval(x: [f64; 2]) -> f64 {
    rosenbrock_inner(x).sqrt().sqrt()
}

fn rosenbrock_inner([x1, x2]: [f64; 2]) -> f64 {
    let a = 1.0 - 10.0 * x1;
    let b = 10.0 * (x2 - x1 * x1);
    a * a + 100.0 * b * b
}

/// Analytic gradient. At the minimum, where the fourth root has a cusp, the
/// zero vector is returned.
pub fn rosenbrock_grad([x1, x2]: [f64; 2]) -> [f64; 2] {
    let a = 1.0 - 10.0 * x1;
    let b = 10.0 * (x2 - x1 * x1);
    let q = a * a + 100.0 * b * b;
    if q == 0.0 {
        return [0.0, 0.0];
    }
    let outer = 0.25 * q.powf(-0.75);
    let dq1 = -20.0 * a - 4000.0 * b * x1;
    let dq2 = 2000.0 * b;
    [outer * dq1, outer * dq2]
}

/// Equal-weight mixture of two isotropic Gaussians, negated so the modes
/// become minima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub means: [[f64; 2]; 2],
    pub variance: f64,
}

impl Default for GaussianMixture {
    fn default() -> Self {
        Self {
            means: [[-0.2, -0.2], [0.2, 0.2]],
            variance: 0.02,
        }
    }
}

impl GaussianMixture {
    fn density(&self, x: [f64; 2], mu: [f64; 2]) -> f64 {
        let d2 = (x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2);
        (-d2 / (2.0 * self.variance)).exp() / (2.0 * std::f64::consts::PI * self.variance)
    }

    /// `−½[N(x; μ₁, σ²I) + N(x; μ₂, σ²I)]`.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        -0.5 * self
            .means
            .iter()
            .map(|&mu| self.density(x, mu))
            .sum::<f64>()
    }

    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for mu in self.means {
            let w = 0.5 * self.density(x, mu) / self.variance;
            g[0] += w * (x[0] - mu[0]);
            g[1] += w * (x[1] - mu[1]);
        }
        g
    }
}

/// The default two-Gaussian target.
pub fn gauss2_eval(x: [f64; 2]) -> f64 {
    GaussianMixture::default().eval(x)
}

pub fn gauss2_grad(x: [f64; 2]) -> [f64; 2] {
    GaussianMixture::default().grad(x)
}

/// Named synthetic targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Rosenbrock,
    Gauss2,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Rosenbrock => "rosenbrock",
            Target::Gauss2 => "gauss2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rosenbrock" => Some(Target::Rosenbrock),
            "gauss2" => Some(Target::Gauss2),
            _ => None,
        }
    }

    pub fn eval(self, x: [f64; 2]) -> f64 {
        match self {
            Target::Rosenbrock => rosenbrock_eval(x),
            Target::Gauss2 => gauss2_eval(x),
        }
    }

    pub fn grad(self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Target::Rosenbrock => rosenbrock_grad(x),
            Target::Gauss2 => gauss2_grad(x),
        }
    }
}

/// Axis-aligned lattice with `points` samples per dimension, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ranges: Vec<(f64, f64)>,
    pub points: usize,
}

impl GridSpec {
    /// `m × m` grid over `[lo, hi]²`.
    /// The 40 × 40 training grid over `[−0.4, 0.4]²`.
    pub fn training() -> Self {
        Self::square(DATA_BOX.0, DATA_BOX.1, 40)
    }

    pub fn square(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            ranges: vec![(lo, hi); 2],
            points,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.points < 2 {
            return Err(ModelError::InvalidConfig(
                "grid needs at least two points per axis".into(),
            ));
        }
        if self.ranges.is_empty()
            || self
                .ranges
                .iter()
                .any(|&(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite()))
        {
            return Err(ModelError::InvalidConfig(
                "grid ranges need finite lo < hi".into(),
            ));
        }
        Ok(())
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.points.pow(self.ranges.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.ranges[axis];
        (hi - lo) / (self.points - 1) as f64
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = self.ranges[axis];
        if i == self.points - 1 {
            hi
        } else {
            lo + i as f64 * self.spacing(axis)
        }
    }

    /// Coordinates along one axis, endpoints exact.
    pub fn points_along(&self, axis: usize) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(axis, i)).collect()
    }

    /// Lattice points in row-major order: the last axis varies fastest.
    pub fn points(&self) -> Array2<f64> {
        let d = self.ranges.len();
        let n = self.points.pow(d as u32);
        Array2::from_shape_fn((n, d), |(row, axis)| {
            let stride = self.points.pow((d - 1 - axis) as u32);
            self.coord(axis, (row / stride) % self.points)
        })
    }
}

/// Evaluates a planar target on a two-dimensional grid.
pub fn grid_dataset(spec: &GridSpec, target: Target) -> Result<LabelledDataset, ModelError> {
    spec.validate()?;
    if spec.ranges.len() != 2 {
        return Err(ModelError::InvalidConfig(
            "planar targets need a two-dimensional grid".into(),
        ));
    }
    let x = spec.points();
    let y: Array1<f64> = x
        .rows()
        .into_iter()
        .map(|r| target.eval([r[0], r[1]]))
        .collect();
    LabelledDataset::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_values() {
        // 0.1² is not the double nearest 0.01; the fourth root magnifies the gap.
        assert_eq!(rosenbrock_eval([0.1, 0.1 * 0.1]), 0.0);
        assert!(rosenbrock_eval([0.1, 0.01]) < 2e-8);
        assert_eq!(rosenbrock_eval([0.0, 0.0]), 1.0);
        assert!((rosenbrock_eval([0.2, 0.04]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_values() {
        let e = -0.5 * (1.0 + (-8.0f64).exp()) / (2.0 * std::f64::consts::PI * 0.02);
        assert!((gauss2_eval([-0.2, -0.2]) - e).abs() < 1e-12);
        assert!((e + 3.9802).abs() < 1e-4);
        assert_eq!(gauss2_eval([-0.2, -0.2]), gauss2_eval([0.2, 0.2]));
    }

    #[test]
    fn grid_layout() {
        let d = grid_dataset(&GridSpec::square(-0.4, 0.4, 40), Target::Rosenbrock).unwrap();
        assert_eq!(d.len(), 1600);
        assert_eq!(d.x().row(0).to_vec(), vec![-0.4, -0.4]);
        assert_eq!(d.x().row(1599).to_vec(), vec![0.4, 0.4]);
        assert_eq!(d.x().row(1).to_vec()[0], -0.4);
        assert!((GridSpec::square(-0.4, 0.4, 40).spacing(0) - 0.8 / 39.0).abs() < 1e-16);
    }

    #[test]
    fn invalid_grids() {
        assert!(GridSpec::square(0.0, 1.0, 1).validate().is_err());
        assert!(GridSpec::square(1.0, 0.0, 5).validate().is_err());
    }
}
