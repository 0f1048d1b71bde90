//! Hyperspherical coordinates about the origin.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// `r`, latitudes `φ_1..φ_{n−2} ∈ [0, π]` and azimuth `φ_{n−1} ∈ [0, 2π)`.
///
/// In one dimension there are no latitudes and the azimuth is `0` or `π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    pub r: f64,
    pub latitudes: Vec<f64>,
    pub azimuth: f64,
    /// Set for the origin, where the angles are undefined and zeroed.
    pub degenerate: bool,
}

impl SphericalPoint {
    pub fn new(r: f64, latitudes: Vec<f64>, azimuth: f64) -> Self {
        Self {
            r,
            latitudes,
            azimuth,
            degenerate: r == 0.0,
        }
    }
}

/// Forward map: `x_1 = r cos φ_1`, `x_k = r sin φ_1 ⋯ sin φ_{k−1} cos φ_k`,
/// `x_n = r sin φ_1 ⋯ sin φ_{n−1}`.
pub fn sph_to_cart(p: &SphericalPoint, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![p.r * p.azimuth.cos()];
    }
    assert_eq!(
        p.latitudes.len() + 2,
        n,
        "angle count does not match dimension"
    );
    let mut x = Vec::with_capacity(n);
    let mut sin_prod = p.r;
    for &phi in p.latitudes.iter().chain(std::iter::once(&p.azimuth)) {
        x.push(sin_prod * phi.cos());
        sin_prod *= phi.sin();
    }
    x.push(sin_prod);
    x
}

/// Unit vector for the given angles.
pub fn direction(latitudes: &[f64], azimuth: f64, n: usize) -> Vec<f64> {
    sph_to_cart(&SphericalPoint::new(1.0, latitudes.to_vec(), azimuth), n)
}

/// Inverse map. Latitudes use `atan2(‖x_{i+1..}‖, x_i)`, which equals
/// `arccos(x_i/‖x_{i..}‖)` without its loss of precision near the poles; the
/// azimuth uses the half-angle form on whichever side avoids cancellation.
pub fn cart_to_sph(x: &[f64]) -> SphericalPoint {
    let n = x.len();
    assert!(n >= 1, "empty coordinate vector");
    // tail[i] = ‖x_i..‖
    let mut tail = vec![0.0f64; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1].hypot(x[i]);
    }
    let r = tail[0];
    if r == 0.0 {
        return SphericalPoint {
            r: 0.0,
            latitudes: vec![0.0; n.saturating_sub(2)],
            azimuth: 0.0,
            degenerate: true,
        };
    }
    if n == 1 {
        return SphericalPoint::new(r, vec![], if x[0] < 0.0 { PI } else { 0.0 });
    }
    let latitudes = (0..n - 2).map(|i| tail[i + 1].atan2(x[i])).collect();
    let (a, b) = (x[n - 2], x[n - 1]);
    let rho = tail[n - 2];
    let azimuth = if rho == 0.0 {
        0.0
    } else if a >= 0.0 {
        normalise_angle(2.0 * b.atan2(a + rho))
    } else {
        normalise_angle(2.0 * (rho - a).atan2(b))
    };
    SphericalPoint::new(r, latitudes, azimuth)
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalise_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed shortest rotation from `from` to `to`, in `(−π, π]`.
pub fn shortest_arc(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn axis_cases() {
        assert_eq!(
            sph_to_cart(&SphericalPoint::new(1.0, vec![], 0.0), 2),
            vec![1.0, 0.0]
        );
        let x = sph_to_cart(&SphericalPoint::new(1.0, vec![FRAC_PI_2], 0.0), 3);
        // cos(π/2) is 6e-17 in doubles.
        assert!(x[0].abs() < 1e-16 && (x[1] - 1.0).abs() < 1e-16 && x[2] == 0.0);
        assert!(
            sph_to_cart(&SphericalPoint::new(0.0, vec![0.3, 1.0], 4.0), 4)
                .iter()
                .all(|&v| v == 0.0)
        );
    }

    #[test]
    fn inverse_axis_and_origin() {
        let p = cart_to_sph(&[1.0, 0.0]);
        assert_eq!((p.r, p.azimuth, p.degenerate), (1.0, 0.0, false));
        assert!(cart_to_sph(&[0.0, 0.0, 0.0]).degenerate);
        assert_eq!(cart_to_sph(&[-1.0, 0.0]).azimuth, PI);
        assert_eq!(cart_to_sph(&[-2.0]).azimuth, PI);
    }

    #[test]
    fn azimuth_quadrants() {
        for k in 0..16 {
            let a = k as f64 * TAU / 16.0;
            let p = cart_to_sph(&[a.cos(), a.sin()]);
            assert!((p.azimuth - a).abs() < 1e-14, "{k}: {} vs {a}", p.azimuth);
        }
    }

    #[test]
    fn arcs() {
        let d = shortest_arc(350f64.to_radians(), 10f64.to_radians());
        assert!((d - 20f64.to_radians()).abs() < 1e-12);
        assert!((shortest_arc(0.1, 6.0) + (0.1 + TAU - 6.0)).abs() < 1e-12);
        assert_eq!(normalise_angle(-1e-20), 0.0);
    }
}
