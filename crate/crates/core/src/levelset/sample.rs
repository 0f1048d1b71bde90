//! Level-set sampling and on-level interpolation.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    cart_to_sph, check_dim, direction, normalise_angle, radius_search_each, radius_search_many,
    shortest_arc, Center, LatentSpace, LevelSetError, MinimizeOptions, MinimumResult, RadiusHit,
    RadiusOptions, SubspaceBox,
};
use crate::diffnet::row;

/// How directions are chosen in more than two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatitudePolicy {
    /// Sweep the azimuth with these `n − 2` latitudes held fixed.
    Fixed(Vec<f64>),
    /// Directions uniform on the sphere, drawn from the seed.
    UniformSphere { seed: u64 },
}

impl LatitudePolicy {
    /// All latitudes at `π/2`: the circle in the last two coordinates.
    pub fn equator(n: usize) -> Self {
        LatitudePolicy::Fixed(vec![PI / 2.0; n.saturating_sub(2)])
    }
}

/// A point on a level set in both spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPoint {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    /// Spherical coordinates of `z − z*`.
    pub r: f64,
    pub latitudes: Vec<f64>,
    pub azimuth: f64,
    /// Map value at `z`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetPath {
    pub alpha: f64,
    pub points: Vec<LevelPoint>,
}

fn directions_for(
    n: usize,
    count: usize,
    policy: &LatitudePolicy,
) -> Result<Vec<(Vec<f64>, f64)>, LevelSetError> {
    if n == 1 {
        return Ok((0..count)
            .map(|k| (vec![], if k % 2 == 0 { 0.0 } else { PI }))
            .collect());
    }
    match policy {
        LatitudePolicy::Fixed(lat) => {
            if lat.len() != n - 2 {
                return Err(LevelSetError::InvalidQuery(format!(
                    "{} fixed latitudes given, dimension {n} needs {}",
                    lat.len(),
                    n - 2
                )));
            }
            if lat.iter().any(|&p| !(0.0..=PI).contains(&p)) {
                return Err(LevelSetError::InvalidQuery(
                    "latitudes must lie in [0, π]".into(),
                ));
            }
            Ok((0..count)
                .map(|k| (lat.clone(), TAU * k as f64 / count as f64))
                .collect())
        }
        LatitudePolicy::UniformSphere { seed } => {
            if n == 2 {
                return Ok((0..count)
                    .map(|k| (vec![], TAU * k as f64 / count as f64))
                    .collect());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let s = cart_to_sph(&g);
                if !s.degenerate {
                    out.push((s.latitudes, s.azimuth));
                }
            }
            Ok(out)
        }
    }
}

fn to_points(
    space: &dyn LatentSpace,
    hits: Vec<RadiusHit>,
    angles: Vec<(Vec<f64>, f64)>,
) -> Result<Vec<LevelPoint>, LevelSetError> {
    if hits.is_empty() {
        return Ok(vec![]);
    }
    let d = hits[0].z.len();
    let z = Array2::from_shape_fn((hits.len(), d), |(i, j)| hits[i].z[j]);
    let x = space.to_input(z.view())?;
    Ok(hits
        .into_iter()
        .zip(angles)
        .zip(x.rows())
        .map(|((h, (latitudes, azimuth)), xr)| LevelPoint {
            z: h.z,
            x: xr.to_vec(),
            r: h.r,
            latitudes,
            azimuth,
            value: h.value,
        })
        .collect())
}

fn center_point(space: &dyn LatentSpace, center: &Center) -> Result<LevelPoint, LevelSetError> {
    let x = space.to_input(row(&center.z).view())?;
    Ok(LevelPoint {
        z: center.z.clone(),
        x: x.row(0).to_vec(),
        r: 0.0,
        latitudes: vec![0.0; center.z.len().saturating_sub(2)],
        azimuth: 0.0,
        value: center.value,
    })
}

/// `count` points of the level set `{F = α}` about `center`.
///
/// In the plane the azimuth is swept uniformly over `[0, 2π)`. A level equal
/// to the minimum value yields the minimiser alone. When the centre has a
/// domain, directions whose ray leaves it below the level are left out; the
/// call fails only if every direction does.
pub fn levelset_sample(
    space: &dyn LatentSpace,
    center: &Center,
    alpha: f64,
    count: usize,
    policy: &LatitudePolicy,
    opts: &RadiusOptions,
) -> Result<Vec<LevelPoint>, LevelSetError> {
    let n = center.z.len();
    check_dim(space, n)?;
    if alpha == center.value {
        return Ok(vec![center_point(space, center)?]);
    }
    let angles = directions_for(n, count, policy)?;
    let dirs: Vec<Vec<f64>> = angles.iter().map(|(l, a)| direction(l, *a, n)).collect();
    if center.domain.is_none() {
        let hits = radius_search_many(space, center, &dirs, alpha, opts)?;
        return to_points(space, hits, angles);
    }
    let mut hits = Vec::with_capacity(count);
    let mut kept = Vec::with_capacity(count);
    let mut missed = None;
    for (outcome, angle) in radius_search_each(space, center, &dirs, alpha, opts)?
        .into_iter()
        .zip(angles)
    {
        match outcome {
            Ok(h) => {
                hits.push(h);
                kept.push(angle);
            }
            Err(e @ LevelSetError::OutsideSubspace { .. }) => missed = Some(e),
            Err(e) => return Err(e),
        }
    }
    match missed {
        Some(e) if hits.is_empty() => Err(e),
        _ => to_points(space, hits, kept),
    }
}

/// Widening applied by [`region_center`] to the latent image of the region.
pub const DOMAIN_MARGIN: f64 = 0.25;

/// Centre for level sets over an input region: the minimum over the widened
/// latent bounding box of `input_box`, started from the image of its centre.
pub fn region_center(
    space: &dyn LatentSpace,
    input_box: &SubspaceBox,
    opts: &MinimizeOptions,
) -> Result<(Center, MinimumResult), LevelSetError> {
    let domain = latent_domain(space, input_box, DOMAIN_MARGIN)?;
    let start = space
        .to_latent(row(&input_box.centre()).view())?
        .row(0)
        .to_vec();
    Center::locate(space, &start, Some(&domain), opts)
}

/// Bounding box of the latent image of `input_box`, widened by `margin` times
/// its extent on every side.
///
/// The image is taken from a grid of about `10⁴` points, corners included.
pub fn latent_domain(
    space: &dyn LatentSpace,
    input_box: &SubspaceBox,
    margin: f64,
) -> Result<SubspaceBox, LevelSetError> {
    let n = input_box.dim();
    check_dim(space, n)?;
    if !(margin >= 0.0) {
        return Err(LevelSetError::InvalidQuery(
            "margin must be non-negative".into(),
        ));
    }
    let per_axis = ((1e4f64).powf(1.0 / n as f64).floor() as usize).max(2);
    let total = per_axis.pow(n as u32);
    let grid = Array2::from_shape_fn((total, n), |(i, j)| {
        let k = (i / per_axis.pow(j as u32)) % per_axis;
        let (lo, hi) = (input_box.lower()[j], input_box.upper()[j]);
        lo + (hi - lo) * k as f64 / (per_axis - 1) as f64
    });
    let z = space.to_latent(grid.view())?;
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for col in z.columns() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = margin * (hi - lo);
        lower.push(lo - pad);
        upper.push(hi + pad);
    }
    SubspaceBox::new(lower, upper)
}

/// Path along the level set from `x_a` to `x_b` with `steps` points.
///
/// Both endpoints must lie within `10·tol` of `α`. The azimuth moves along the
/// shorter arc, latitudes move linearly, and each interior waypoint has its
/// radius re-solved. Endpoints are returned exactly as given.
pub fn levelset_interpolate(
    space: &dyn LatentSpace,
    center: &Center,
    x_a: &[f64],
    x_b: &[f64],
    alpha: f64,
    steps: usize,
    opts: &RadiusOptions,
) -> Result<LevelSetPath, LevelSetError> {
    if x_a.len() != x_b.len() {
        return Err(LevelSetError::InvalidQuery(
            "endpoints differ in dimension".into(),
        ));
    }
    check_dim(space, center.z.len())?;
    let mut ends = Vec::with_capacity(2);
    for x in [x_a, x_b] {
        let z = space.to_latent(row(x).view())?.row(0).to_vec();
        ends.push((z, x.to_vec()));
    }
    let b = ends.pop().expect("end");
    let a = ends.pop().expect("start");
    interpolate_between(space, center, a, b, alpha, steps, opts)
}

/// [`levelset_interpolate`] with latent endpoints. Useful where the flow's
/// inverse overflows and the input points are not representable.
pub fn levelset_interpolate_latent(
    space: &dyn LatentSpace,
    center: &Center,
    z_a: &[f64],
    z_b: &[f64],
    alpha: f64,
    steps: usize,
    opts: &RadiusOptions,
) -> Result<LevelSetPath, LevelSetError> {
    if z_a.len() != z_b.len() {
        return Err(LevelSetError::InvalidQuery(
            "endpoints differ in dimension".into(),
        ));
    }
    check_dim(space, center.z.len())?;
    let mut ends = Vec::with_capacity(2);
    for z in [z_a, z_b] {
        let x = space.to_input(row(z).view())?.row(0).to_vec();
        ends.push((z.to_vec(), x));
    }
    let b = ends.pop().expect("end");
    let a = ends.pop().expect("start");
    interpolate_between(space, center, a, b, alpha, steps, opts)
}

fn interpolate_between(
    space: &dyn LatentSpace,
    center: &Center,
    (z_a, x_a): (Vec<f64>, Vec<f64>),
    (z_b, x_b): (Vec<f64>, Vec<f64>),
    alpha: f64,
    steps: usize,
    opts: &RadiusOptions,
) -> Result<LevelSetPath, LevelSetError> {
    let n = center.z.len();
    if n < 2 {
        return Err(LevelSetError::InvalidQuery(
            "interpolation needs at least two dimensions".into(),
        ));
    }
    if steps < 2 {
        return Err(LevelSetError::InvalidQuery(
            "a path needs at least two steps".into(),
        ));
    }
    if z_a.len() != n {
        return Err(LevelSetError::InvalidQuery(
            "endpoints differ in dimension from the centre".into(),
        ));
    }
    let mut ends = Vec::with_capacity(2);
    for (z, x) in [(z_a, x_a), (z_b, x_b)] {
        let value = space.value_at(&z)?;
        let tol = 10.0 * opts.tol;
        if !((value - alpha).abs() <= tol) {
            return Err(LevelSetError::NotOnLevel { value, alpha, tol });
        }
        let offset: Vec<f64> = z.iter().zip(&center.z).map(|(a, b)| a - b).collect();
        let s = cart_to_sph(&offset);
        ends.push(LevelPoint {
            z,
            x,
            r: s.r,
            latitudes: s.latitudes,
            azimuth: s.azimuth,
            value,
        });
    }
    let (a, b) = (&ends[0], &ends[1]);
    let arc = shortest_arc(a.azimuth, b.azimuth);
    let angles: Vec<(Vec<f64>, f64)> = (1..steps - 1)
        .map(|k| {
            let t = k as f64 / (steps - 1) as f64;
            let lat = a
                .latitudes
                .iter()
                .zip(&b.latitudes)
                .map(|(p, q)| p + t * (q - p))
                .collect();
            (lat, normalise_angle(a.azimuth + t * arc))
        })
        .collect();
    let dirs: Vec<Vec<f64>> = angles.iter().map(|(l, az)| direction(l, *az, n)).collect();
    let interior = if dirs.is_empty() {
        vec![]
    } else {
        to_points(
            space,
            radius_search_many(space, center, &dirs, alpha, opts)?,
            angles,
        )?
    };
    let mut ends = ends.into_iter();
    let mut points = vec![ends.next().expect("start")];
    points.extend(interior);
    points.push(ends.next().expect("end"));
    Ok(LevelSetPath { alpha, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::FnMap;

    fn iso(n: usize) -> impl LatentSpace {
        FnMap::new(
            n,
            |z: &[f64]| z.iter().map(|v| v * v).sum(),
            |z: &[f64]| z.iter().map(|v| 2.0 * v).collect(),
        )
    }

    #[test]
    fn unit_circle() {
        let m = iso(2);
        let c = Center::at(&m, &[0.0, 0.0]).unwrap();
        let pts = levelset_sample(
            &m,
            &c,
            1.0,
            16,
            &LatitudePolicy::equator(2),
            &RadiusOptions::default(),
        )
        .unwrap();
        assert_eq!(pts.len(), 16);
        for p in &pts {
            let r = p.z.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-6);
            assert_eq!(p.x, p.z);
        }
    }

    #[test]
    fn sphere_policies() {
        let m = iso(3);
        let c = Center::at(&m, &[0.0; 3]).unwrap();
        let o = RadiusOptions::default();
        for pol in [
            LatitudePolicy::equator(3),
            LatitudePolicy::UniformSphere { seed: 4 },
        ] {
            let pts = levelset_sample(&m, &c, 2.0, 20, &pol, &o).unwrap();
            assert!(pts.iter().all(|p| o.accepts(p.value, 2.0)));
        }
        assert!(levelset_sample(&m, &c, 2.0, 3, &LatitudePolicy::Fixed(vec![]), &o).is_err());
    }

    #[test]
    fn degenerate_level_is_the_minimiser() {
        let m = iso(2);
        let c = Center::at(&m, &[0.0, 0.0]).unwrap();
        let pts = levelset_sample(
            &m,
            &c,
            0.0,
            8,
            &LatitudePolicy::equator(2),
            &RadiusOptions::default(),
        )
        .unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].z, vec![0.0, 0.0]);
    }

    #[test]
    fn two_step_path_is_the_endpoints() {
        let m = iso(2);
        let c = Center::at(&m, &[0.0, 0.0]).unwrap();
        let a = [1.0, 0.0];
        let b = [0.0, -1.0];
        let p = levelset_interpolate(&m, &c, &a, &b, 1.0, 2, &RadiusOptions::default()).unwrap();
        assert_eq!(p.points.len(), 2);
        assert_eq!(p.points[0].x, a.to_vec());
        assert_eq!(p.points[1].x, b.to_vec());
    }

    #[test]
    fn path_takes_the_short_way() {
        let m = iso(2);
        let c = Center::at(&m, &[0.0, 0.0]).unwrap();
        let a350 = 350f64.to_radians();
        let a10 = 10f64.to_radians();
        let p = levelset_interpolate(
            &m,
            &c,
            &[a350.cos(), a350.sin()],
            &[a10.cos(), a10.sin()],
            1.0,
            9,
            &RadiusOptions::default(),
        )
        .unwrap();
        for q in &p.points {
            assert!(q.z[0] > 0.9, "waypoint strayed: {:?}", q.z);
        }
        let mid = &p.points[4];
        assert!(mid.azimuth < 1e-9 || mid.azimuth > TAU - 1e-9);
    }

    #[test]
    fn off_level_endpoint_rejected() {
        let m = iso(2);
        let c = Center::at(&m, &[0.0, 0.0]).unwrap();
        let e = levelset_interpolate(
            &m,
            &c,
            &[1.1, 0.0],
            &[0.0, 1.0],
            1.0,
            5,
            &RadiusOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(e, LevelSetError::NotOnLevel { .. }));
    }

    #[test]
    fn domain_keeps_the_inside_arc() {
        let m = iso(2);
        let b = SubspaceBox::new(vec![-2.0, -2.0], vec![0.5, 2.0]).unwrap();
        let c = Center {
            domain: Some(b.clone()),
            ..Center::at(&m, &[0.0, 0.0]).unwrap()
        };
        let o = RadiusOptions::default();
        let pts = levelset_sample(&m, &c, 1.0, 36, &LatitudePolicy::equator(2), &o).unwrap();
        // The unit circle leaves the box where z1 > 0.5, i.e. |azimuth| < π/3.
        assert!(pts.len() < 36 && pts.len() > 20);
        assert!(pts
            .iter()
            .all(|p| b.contains(&p.z) && o.accepts(p.value, 1.0)));
        assert!(levelset_sample(&m, &c, 100.0, 8, &LatitudePolicy::equator(2), &o).is_err());
    }

    #[test]
    fn latent_domain_covers_the_image() {
        let m = iso(2);
        let b = SubspaceBox::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
        let d = latent_domain(&m, &b, 0.25).unwrap();
        assert_eq!(d.lower(), &[-1.5, -0.75]);
        assert_eq!(d.upper(), &[1.5, 3.75]);
    }
}
