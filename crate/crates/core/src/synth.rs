//! Synthetic point-cloud generators for validation and benchmarks.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// The generated sheet keeps |y| <= 1 - CURL_MARGIN, so the two upper edges
/// of the curled surface stay an open arc apart instead of touching.
pub const CURL_MARGIN: f64 = 0.08;

/// Height-field amplitude of the pre-transform sheet.
pub const CURL_BUMP_AMPLITUDE: f64 = 0.05;

/// Uniform points on a sphere with Gaussian radial noise.
pub fn gen_sphere(n: usize, radius: f64, noise_sigma: f64, seed: u64) -> Result<PointCloud> {
    if n < 4 {
        return Err(Error::invalid("sphere generator needs n >= 4"));
    }
    if !(radius > 0.0) || noise_sigma < 0.0 {
        return Err(Error::invalid("radius must be > 0 and noiseSigma >= 0"));
    }
    let mut rng = crate::seeded_rng(seed);
    let normal = StandardNormal;
    let mut gauss = || -> f64 { normal.sample(&mut rng) };
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let dir = Vector3::new(gauss(), gauss(), gauss());
        let len = dir.norm();
        if len < 1e-9 {
            continue;
        }
        let r = radius + noise_sigma * gauss();
        points.push(Point3::from(dir * (r / len)));
    }
    PointCloud::new(points)
}

/// The curling coordinate transform applied to a sheet point (x, y, z):
/// beta = pi (y - 1/2), eta = cos(2 beta) / 3 + 1 - z, and the image is
/// (3x/2, eta cos beta, eta sin beta). Over y in (-1, 1) the image wraps a
/// full turn, so the two y-extremes become neighbouring "upper edges" of the
/// curl separated only by the sampling margin.
pub fn curl_transform(p: &Point3<f64>) -> Point3<f64> {
    let beta = std::f64::consts::PI * (p.y - 0.5);
    let eta = (2.0 * beta).cos() / 3.0 + 1.0 - p.z;
    Point3::new(1.5 * p.x, eta * beta.cos(), eta * beta.sin())
}

/// A curled open sheet: a gently bumped flat sheet pushed through
/// `curl_transform`. Deterministic under `seed`.
pub fn gen_curled_sheet(n: usize, seed: u64) -> Result<PointCloud> {
    if n < 100 {
        return Err(Error::invalid("curled-sheet generator needs n >= 100"));
    }
    let mut rng = crate::seeded_rng(seed);
    let y_max = 1.0 - CURL_MARGIN;
    let points: Vec<Point3<f64>> = (0..n)
        .map(|_| {
            let x = rng.gen::<f64>() * 2.0 - 1.0;
            let y = (rng.gen::<f64>() * 2.0 - 1.0) * y_max;
            let z = CURL_BUMP_AMPLITUDE
                * (std::f64::consts::FRAC_PI_2 * x).cos()
                * (std::f64::consts::FRAC_PI_2 * y).cos();
            curl_transform(&Point3::new(x, y, z))
        })
        .collect();
    PointCloud::new(points)
}

/// Uniform random points in the unit cube with smooth-plus-noise samples,
/// for scaling benchmarks.
pub fn gen_random_volume_samples(n: usize, seed: u64) -> (Vec<Point3<f64>>, Vec<f64>) {
    let mut rng = crate::seeded_rng(seed);
    let points: Vec<Point3<f64>> = (0..n)
        .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    let values = points
        .iter()
        .map(|p| (4.0 * p.x).sin() * (3.0 * p.y).cos() + p.z + 0.02 * (rng.gen::<f64>() - 0.5))
        .collect();
    (points, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn noiseless_sphere_points_sit_on_the_sphere() {
        let cloud = gen_sphere(500, 2.5, 0.0, 1).unwrap();
        for p in cloud.points() {
            assert!((p.coords.norm() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_reproduces_the_cloud() {
        let a = gen_sphere(200, 1.0, 0.01, 42).unwrap();
        let b = gen_sphere(200, 1.0, 0.01, 42).unwrap();
        assert_eq!(a, b);
        let c = gen_curled_sheet(300, 7).unwrap();
        let d = gen_curled_sheet(300, 7).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn radial_noise_has_the_requested_spread() {
        let sigma = 0.005;
        let cloud = gen_sphere(100_000, 1.0, sigma, 3).unwrap();
        let deviations: Vec<f64> = cloud.points().iter().map(|p| p.coords.norm() - 1.0).collect();
        let mean = deviations.iter().sum::<f64>() / deviations.len() as f64;
        let var = deviations.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / deviations.len() as f64;
        let sample_sigma = var.sqrt();
        assert!(
            (sample_sigma - sigma).abs() <= 0.1 * sigma,
            "sample sigma {sample_sigma} deviates more than 10% from {sigma}"
        );
    }

    #[test]
    fn transform_hand_checks() {
        // y = 1/2 gives beta = 0: the image is (3x/2, eta, 0)
        let p = curl_transform(&Point3::new(0.4, 0.5, 0.1));
        let eta = 1.0 / 3.0 + 1.0 - 0.1;
        assert_relative_eq!(p.x, 0.6);
        assert_relative_eq!(p.y, eta, epsilon = 1e-15);
        assert_relative_eq!(p.z, 0.0, epsilon = 1e-12);

        // y = 0, z = 0: beta = -pi/2, eta = cos(-pi)/3 + 1 = 2/3,
        // image (3x/2, 0, -2/3)
        let q = curl_transform(&Point3::new(-0.8, 0.0, 0.0));
        assert_relative_eq!(q.x, -1.2);
        assert_relative_eq!(q.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.z, -2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn upper_edges_have_a_positive_gap() {
        let cloud = gen_curled_sheet(30_000, 11).unwrap();
        // the two edges approach angles pi/2 -/+ pi * CURL_MARGIN in the
        // (y*, z*) plane; bands just inside each edge must stay apart
        let theta_of = |p: &Point3<f64>| p.z.atan2(p.y);
        let edge_a = std::f64::consts::FRAC_PI_2 - std::f64::consts::PI * CURL_MARGIN;
        let edge_b = std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * CURL_MARGIN;
        let band = 0.05;
        let strip_a: Vec<&Point3<f64>> = cloud
            .points()
            .iter()
            .filter(|p| (theta_of(p) - edge_a).abs() <= band)
            .collect();
        let strip_b: Vec<&Point3<f64>> = cloud
            .points()
            .iter()
            .filter(|p| (theta_of(p) - edge_b).abs() <= band)
            .collect();
        assert!(!strip_a.is_empty() && !strip_b.is_empty());
        let mut min_dist = f64::INFINITY;
        for a in &strip_a {
            for b in &strip_b {
                min_dist = min_dist.min((**a - **b).norm());
            }
        }
        assert!(
            min_dist > 0.15,
            "edge strips are only {min_dist} apart; expected a clear gap"
        );
    }

    #[test]
    fn preconditions_are_enforced() {
        assert!(gen_sphere(3, 1.0, 0.0, 0).is_err());
        assert!(gen_sphere(10, 0.0, 0.0, 0).is_err());
        assert!(gen_curled_sheet(99, 0).is_err());
    }
}
