//! The global partition-of-unity field F(x) = sum_i w_i(x) F_i(x), its
//! analytic derivatives, and the evaluation-domain mask.
//!
//! The mask is a union of balls of radius alpha around the augmented sites.
//! It only has to answer "is x near the data": evaluating the blend far from
//! the cloud invites spurious zero crossings, so out-of-domain is a
//! first-class result rather than an error.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::cloud::AugmentedDataset;
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::solver::LocalSpline;
use crate::spatial::SpatialIndex;

/// Union-of-balls inside/outside test around a site set.
#[derive(Debug, Clone)]
pub struct DomainMask {
    index: SpatialIndex,
    alpha: f64,
}

impl DomainMask {
    /// Build over arbitrary sites.
    pub fn from_sites(sites: &[Point3<f64>], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(DomainMask {
            index: SpatialIndex::build(sites)?,
            alpha,
        })
    }

    /// True when `x` lies within `alpha` of some site (closed ball).
    #[inline]
    pub fn contains(&self, x: &Point3<f64>) -> bool {
        self.index.nearest(x).1 <= self.alpha
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sites(&self) -> &[Point3<f64>] {
        self.index.points()
    }
}

/// Build the evaluation-domain mask over the augmented sites. Values of
/// alpha outside [3L, 10L] are accepted with a logged advisory.
pub fn build_domain_mask(augmented: &AugmentedDataset, alpha: f64) -> Result<DomainMask> {
    let l = augmented.offset();
    if alpha < 3.0 * l || alpha > 10.0 * l {
        log::warn!(
            "alpha = {alpha} is outside the recommended range [3L, 10L] = [{}, {}]",
            3.0 * l,
            10.0 * l
        );
    }
    DomainMask::from_sites(augmented.sites(), alpha)
}

/// Value and gradient of the field at an in-domain point.
#[derive(Debug, Clone, Copy)]
pub struct FieldSample {
    pub value: f64,
    pub gradient: Vector3<f64>,
}

/// The fitted global field: a partition with one local spline per subdomain
/// plus the evaluation-domain mask. Immutable and shareable across workers.
pub struct ImplicitField {
    partition: Partition,
    splines: Vec<LocalSpline>,
    mask: DomainMask,
}

impl ImplicitField {
    pub fn new(partition: Partition, splines: Vec<LocalSpline>, mask: DomainMask) -> Result<Self> {
        if partition.len() != splines.len() {
            return Err(Error::invalid(format!(
                "{} subdomains but {} fitted splines",
                partition.len(),
                splines.len()
            )));
        }
        Ok(ImplicitField {
            partition,
            splines,
            mask,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn splines(&self) -> &[LocalSpline] {
        &self.splines
    }

    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    /// True when `x` is within the mask and inside at least one subdomain.
    pub fn in_domain(&self, x: &Point3<f64>) -> bool {
        self.mask.contains(x) && !self.partition.shepard_weights(x).is_empty()
    }

    /// The blended value, `None` out of domain.
    pub fn value(&self, x: &Point3<f64>) -> Option<f64> {
        if !self.mask.contains(x) {
            return None;
        }
        let weights = self.partition.shepard_weights(x);
        if weights.is_empty() {
            return None;
        }
        Some(
            weights
                .iter()
                .map(|&(i, w)| w * self.splines[i].eval(x))
                .sum(),
        )
    }

    /// Value and analytic gradient, `None` out of domain.
    pub fn eval(&self, x: &Point3<f64>) -> Option<FieldSample> {
        self.value_grad_hess(x)
            .map(|(value, gradient, _)| FieldSample { value, gradient })
    }

    /// Analytic gradient; an out-of-domain query is an error.
    pub fn gradient(&self, x: &Point3<f64>) -> Result<Vector3<f64>> {
        self.value_grad_hess(x)
            .map(|(_, g, _)| g)
            .ok_or_else(|| Error::OutOfDomain(x.x, x.y, x.z))
    }

    /// Mean curvature of the level set through `x`, from analytic first and
    /// second derivatives of the blend:
    /// K = -(|g|^2 tr(H) - g^T H g) / |g|^3, the expanded divergence of the
    /// unit gradient.
    pub fn mean_curvature(&self, x: &Point3<f64>) -> Result<f64> {
        let (_, gradient, hessian) = self
            .value_grad_hess(x)
            .ok_or_else(|| Error::OutOfDomain(x.x, x.y, x.z))?;
        let g2 = gradient.norm_squared();
        let g = g2.sqrt();
        if g <= 1e-12 {
            return Err(Error::numerical(format!(
                "vanishing gradient at ({}, {}, {}); curvature is undefined",
                x.x, x.y, x.z
            )));
        }
        let quad = (gradient.transpose() * hessian * gradient)[(0, 0)];
        Ok(-(g2 * hessian.trace() - quad) / (g2 * g))
    }

    /// Shared evaluation core: Shepard-blended value, gradient, and Hessian.
    ///
    /// With S = sum_k phi_k: w_i = phi_i / S,
    /// grad w_i = (grad phi_i - w_i grad S) / S, and
    /// H(w_i) = (H(phi_i) - grad w_i grad S^T - grad S grad w_i^T - w_i H(S)) / S.
    pub fn value_grad_hess(&self, x: &Point3<f64>) -> Option<(f64, Vector3<f64>, Matrix3<f64>)> {
        if !self.mask.contains(x) {
            return None;
        }
        let ids = self.partition.covering(x);
        if ids.is_empty() {
            return None;
        }

        let raw: Vec<crate::partition::WeightDerivs> = ids
            .iter()
            .map(|&i| self.partition.raw_weight_derivs(i, x))
            .collect();
        let s: f64 = raw.iter().map(|d| d.value).sum();
        if s <= 0.0 {
            // boundary-only cover: fall back to the plain blended value of
            // the nearest subdomain
            let nearest = self.partition.shepard_weights(x);
            let (i, _) = *nearest.first()?;
            let (value, gradient, hessian) = self.splines[i].value_grad_hess(x);
            return Some((value, gradient, hessian));
        }
        let mut grad_s = Vector3::zeros();
        let mut hess_s = Matrix3::zeros();
        for d in &raw {
            grad_s += d.gradient;
            hess_s += d.hessian;
        }

        let mut value = 0.0;
        let mut gradient = Vector3::zeros();
        let mut hessian = Matrix3::zeros();
        for (&i, d) in ids.iter().zip(&raw) {
            let w = d.value / s;
            let grad_w = (d.gradient - w * grad_s) / s;
            let hess_w = (d.hessian
                - grad_w * grad_s.transpose()
                - grad_s * grad_w.transpose()
                - w * hess_s)
                / s;
            let (fi, grad_fi, hess_fi) = self.splines[i].value_grad_hess(x);
            value += w * fi;
            gradient += grad_w * fi + w * grad_fi;
            hessian += hess_w * fi
                + grad_w * grad_fi.transpose()
                + grad_fi * grad_w.transpose()
                + w * hess_fi;
        }
        Some((value, gradient, hessian))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{build_partition, WeightKind};
    use crate::solver::{fit_local, LocalFrame, PhsKernel};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_sites(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = crate::seeded_rng(seed);
        (0..n)
            .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
            .collect()
    }

    /// Partition + fit + mask over arbitrary scattered data.
    fn fit_field(
        sites: &[Point3<f64>],
        values: &[f64],
        rho: f64,
        n_min: usize,
        n_max: usize,
    ) -> ImplicitField {
        let kernel = PhsKernel::new(3, 3).unwrap();
        let partition =
            build_partition(sites, n_min, n_max, 1.1, WeightKind::WendlandC2).unwrap();
        let splines: Vec<_> = partition
            .subdomains()
            .iter()
            .enumerate()
            .map(|(id, sub)| {
                let local_sites: Vec<Point3<f64>> =
                    sub.member_ids.iter().map(|&i| sites[i]).collect();
                let local_values: Vec<f64> = sub.member_ids.iter().map(|&i| values[i]).collect();
                let frame = LocalFrame::new(sub.center, sub.radius);
                let mut spline =
                    fit_local(&local_sites, &local_values, &kernel, rho, &frame).unwrap();
                spline.subdomain_id = id;
                spline
            })
            .collect();
        let mask = DomainMask::from_sites(sites, 100.0).unwrap();
        ImplicitField::new(partition, splines, mask).unwrap()
    }

    #[test]
    fn pum_blend_keeps_local_exactness() {
        let sites = random_sites(3000, 1);
        let mut rng = crate::seeded_rng(2);
        let values: Vec<f64> = (0..3000).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let field = fit_field(&sites, &values, 0.0, 200, 600);
        let max_f = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (site, &f) in sites.iter().zip(&values) {
            let v = field.value(site).expect("sites are in-domain");
            assert!(
                (v - f).abs() <= 1e-6 * (1.0 + max_f),
                "blend broke exactness at {site:?}: {v} vs {f}"
            );
        }
    }

    #[test]
    fn far_points_are_out_of_domain() {
        let sites = random_sites(500, 3);
        let values = vec![0.0; 500];
        let field = fit_field(&sites, &values, 0.0, 100, 300);
        let far = Point3::new(1e4, 1e4, 1e4);
        assert!(field.value(&far).is_none());
        assert!(!field.in_domain(&far));
        assert!(matches!(
            field.gradient(&far),
            Err(Error::OutOfDomain(..))
        ));
    }

    #[test]
    fn blend_is_a_convex_combination_in_overlaps() {
        let sites = random_sites(2000, 4);
        let values: Vec<f64> = sites.iter().map(|p| (3.0 * p.x).sin() + p.y).collect();
        let field = fit_field(&sites, &values, 0.0, 150, 400);
        let mut rng = crate::seeded_rng(5);
        let mut tested = 0;
        while tested < 50 {
            let x = Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let weights = field.partition().shepard_weights(&x);
            if weights.len() < 2 {
                continue;
            }
            let blended = field.value(&x).unwrap();
            // manual blend from per-subdomain evaluations
            let manual: f64 = weights
                .iter()
                .map(|&(i, w)| w * field.splines()[i].eval(&x))
                .sum();
            assert_relative_eq!(blended, manual, epsilon = 1e-12);
            let locals: Vec<f64> = weights
                .iter()
                .map(|&(i, _)| field.splines()[i].eval(&x))
                .collect();
            let lo = locals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = locals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(blended >= lo - 1e-12 && blended <= hi + 1e-12);
            tested += 1;
        }
    }

    #[test]
    fn zero_weight_subdomains_do_not_matter() {
        let sites = random_sites(2000, 6);
        let values: Vec<f64> = sites.iter().map(|p| p.x * p.y).collect();
        let field = fit_field(&sites, &values, 1e-4, 150, 400);
        let mut rng = crate::seeded_rng(7);
        for _ in 0..50 {
            let x = Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let Some(v) = field.value(&x) else { continue };
            // recompute skipping every subdomain with zero weight at x
            let manual: f64 = field
                .partition()
                .shepard_weights(&x)
                .iter()
                .filter(|&&(_, w)| w > 0.0)
                .map(|&(i, w)| w * field.splines()[i].eval(&x))
                .sum();
            assert!((v - manual).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn linear_data_has_constant_gradient() {
        // One subdomain fitted to f(x) = x_1: polynomial reproduction makes
        // the blend exactly linear.
        let sites = random_sites(300, 8);
        let values: Vec<f64> = sites.iter().map(|p| p.x).collect();
        let field = fit_field(&sites, &values, 0.0, 150, 400);
        let mut rng = crate::seeded_rng(9);
        for _ in 0..20 {
            let x = Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            if let Some(sample) = field.eval(&x) {
                assert_relative_eq!(sample.gradient.x, 1.0, epsilon = 1e-8);
                assert_relative_eq!(sample.gradient.y, 0.0, epsilon = 1e-8);
                assert_relative_eq!(sample.gradient.z, 0.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let sites = random_sites(4000, 10);
        let values: Vec<f64> = sites
            .iter()
            .map(|p| (2.0 * p.x).sin() * (3.0 * p.y).cos() + p.z * p.z)
            .collect();
        let field = fit_field(&sites, &values, 1e-5, 250, 700);
        let mut rng = crate::seeded_rng(11);
        let h = 1e-5;
        let mut tested = 0;
        while tested < 100 {
            let x = Point3::new(
                0.1 + 0.8 * rng.gen::<f64>(),
                0.1 + 0.8 * rng.gen::<f64>(),
                0.1 + 0.8 * rng.gen::<f64>(),
            );
            let Some(sample) = field.eval(&x) else { continue };
            let mut fd = Vector3::zeros();
            let mut ok = true;
            for axis in 0..3 {
                let mut hi = x;
                let mut lo = x;
                hi[axis] += h;
                lo[axis] -= h;
                match (field.value(&hi), field.value(&lo)) {
                    (Some(vh), Some(vl)) => fd[axis] = (vh - vl) / (2.0 * h),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let rel = (sample.gradient - fd).norm() / (fd.norm() + 1e-12);
            assert!(
                rel <= 1e-5,
                "gradient mismatch at {x:?}: analytic {:?} vs fd {fd:?} (rel {rel:.2e})",
                sample.gradient
            );
            tested += 1;
        }
    }

    #[test]
    fn global_error_bounded_by_worst_local_error() {
        let sites = random_sites(2500, 12);
        let g = |p: &Point3<f64>| (2.0 * p.x).sin() * p.y + (1.5 * p.z).cos();
        let values: Vec<f64> = sites.iter().map(g).collect();
        let field = fit_field(&sites, &values, 0.0, 200, 500);

        let mut worst_local = 0.0f64;
        let mut worst_global = 0.0f64;
        let mut rng = crate::seeded_rng(13);
        for _ in 0..500 {
            let x = Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let Some(v) = field.value(&x) else { continue };
            let truth = g(&x);
            worst_global = worst_global.max((v - truth).abs());
            for &(i, w) in &field.partition().shepard_weights(&x) {
                if w > 0.0 {
                    let local = field.splines()[i].eval(&x);
                    worst_local = worst_local.max((local - truth).abs());
                }
            }
        }
        assert!(
            worst_global <= worst_local + 1e-9,
            "global error {worst_global} exceeds worst local error {worst_local}"
        );
    }

    #[test]
    fn mask_agrees_with_brute_force_distances() {
        let sites = random_sites(800, 14);
        let alpha = 0.11;
        let mask = DomainMask::from_sites(&sites, alpha).unwrap();
        let mut rng = crate::seeded_rng(15);
        for _ in 0..500 {
            let x = Point3::new(
                rng.gen::<f64>() * 1.4 - 0.2,
                rng.gen::<f64>() * 1.4 - 0.2,
                rng.gen::<f64>() * 1.4 - 0.2,
            );
            let brute = sites.iter().any(|s| (s - x).norm() <= alpha);
            assert_eq!(mask.contains(&x), brute);
        }
        // any site is inside its own ball
        assert!(mask.contains(&sites[17]));
    }

    #[test]
    fn mask_alpha_advisory_range() {
        // inside [3L, 10L]: no warning expected (we only check it builds);
        // outside: still builds, advisory logged
        let cloud = crate::PointCloud::with_normals(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)],
            vec![Vector3::z(), Vector3::z()],
        )
        .unwrap();
        let aug = crate::normals::augment_offsets(&cloud, 0.1).unwrap();
        for alpha in [0.3, 0.5, 1.0] {
            assert!(build_domain_mask(&aug, alpha).is_ok());
        }
        assert!(build_domain_mask(&aug, 0.05).is_ok());
        assert!(build_domain_mask(&aug, -1.0).is_err());
    }

    #[test]
    fn plane_curvature_is_zero_and_sphere_curvature_is_minus_two() {
        // plane z = 0 via augmented constraints
        let mut rng = crate::seeded_rng(16);
        let mut sites = Vec::new();
        let mut values = Vec::new();
        let l = 0.1;
        for _ in 0..1500 {
            let (x, y) = (rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0);
            sites.push(Point3::new(x, y, 0.0));
            values.push(0.0);
            sites.push(Point3::new(x, y, l));
            values.push(l);
            sites.push(Point3::new(x, y, -l));
            values.push(-l);
        }
        let field = fit_field(&sites, &values, 0.0, 300, 800);
        for _ in 0..20 {
            let x = Point3::new(
                0.3 + 1.4 * rng.gen::<f64>(),
                0.3 + 1.4 * rng.gen::<f64>(),
                0.0,
            );
            let k = field.mean_curvature(&x).unwrap();
            assert!(k.abs() <= 1e-6, "plane curvature {k} should vanish");
        }

        // unit sphere with outward normals: K = -2/R at the surface
        let mut sites = Vec::new();
        let mut values = Vec::new();
        for _ in 0..4000 {
            let dir = Vector3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            )
            .normalize();
            sites.push(Point3::from(dir));
            values.push(0.0);
            sites.push(Point3::from(dir * (1.0 + l)));
            values.push(l);
            sites.push(Point3::from(dir * (1.0 - l)));
            values.push(-l);
        }
        let field = fit_field(&sites, &values, 0.0, 400, 1000);
        let mut errs = Vec::new();
        for _ in 0..50 {
            let dir = Vector3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            )
            .normalize();
            let x = Point3::from(dir);
            let k = field.mean_curvature(&x).unwrap();
            errs.push((k - (-2.0)).abs() / 2.0);

            // gradient is radial at the surface
            let g = field.gradient(&x).unwrap().normalize();
            let angle = g.dot(&dir).abs().min(1.0).acos().to_degrees();
            assert!(angle <= 1.0, "gradient {angle} degrees off radial");
        }
        errs.sort_by(f64::total_cmp);
        let p95 = errs[(errs.len() as f64 * 0.95) as usize - 1];
        assert!(p95 <= 0.05, "95th pct curvature error {p95} above 5%");
    }

    #[test]
    fn critical_point_is_an_error() {
        // symmetric data around the origin: gradient vanishes in the middle
        let sites = vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, -1.0),
            Point3::new(0.5, 0.5, 0.5),
            Point3::new(-0.5, -0.5, 0.5),
            Point3::new(0.5, -0.5, -0.5),
            Point3::new(-0.5, 0.5, -0.5),
        ];
        let values: Vec<f64> = sites.iter().map(|p| p.coords.norm_squared()).collect();
        let kernel = PhsKernel::new(2, 3).unwrap(); // only 4 polynomial terms
        let spline = fit_local(&sites, &values, &kernel, 0.0, &LocalFrame::identity()).unwrap();
        let partition = build_partition(&sites, 5, 20, 1.5, WeightKind::WendlandC2).unwrap();
        let mask = DomainMask::from_sites(&sites, 10.0).unwrap();
        let field = ImplicitField::new(partition, vec![spline], mask).unwrap();
        match field.mean_curvature(&Point3::origin()) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("vanishing gradient")),
            other => panic!("expected vanishing-gradient error, got {other:?}"),
        }
    }
}
