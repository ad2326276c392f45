//! Generalised cross validation for the smoothing parameter.
//!
//! V(rho) = N || (I - B(rho)) f ||^2 / trace(I - B(rho))^2, where B is the
//! influence matrix mapping samples to fitted values. With the QR
//! factorization P = [Q1 Q2] [R; 0],
//!
//! ```text
//!   I - B(rho) = c Q2 ( Q2^T (A + c I) Q2 )^{-1} Q2^T,    c = rho N / theta.
//! ```
//!
//! One symmetric eigendecomposition of Q2^T A Q2 makes every subsequent
//! V(rho) evaluation O(N): with Q2^T A Q2 = U diag(mu) U^T and g = U^T Q2^T f,
//! ||(I-B)f||^2 = c^2 sum (g_i/(mu_i+c))^2 and trace(I-B) = c sum 1/(mu_i+c).

use nalgebra::Point3;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::solver::kernel::PhsKernel;
use crate::solver::linalg::{eigh_sym, HouseholderQr, PivotedQr};

/// Default search bracket for the smoothing parameter.
pub const GCV_RHO_LO: f64 = 1e-6;
pub const GCV_RHO_HI: f64 = 1e-1;

/// Relative tolerance of the golden-section search, in log10(rho) units.
const LOG_TOL: f64 = 1e-2;
/// Coarse scan resolution used to bracket the global minimum before the
/// golden-section refinement.
const SCAN_POINTS: usize = 25;

/// Precomputed spectral form of I - B(rho) for one local problem.
pub struct GcvContext {
    n_sites: usize,
    inv_theta: f64,
    eig_vals: Array1<f64>,
    g: Array1<f64>,
}

impl GcvContext {
    pub fn new(sites: &[Point3<f64>], values: &[f64], kernel: &PhsKernel) -> Result<Self> {
        let n = sites.len();
        let n_poly = kernel.poly_count();
        if values.len() != n {
            return Err(Error::invalid("site and value counts differ"));
        }
        if n <= n_poly {
            return Err(Error::invalid(format!(
                "GCV needs more than {n_poly} sites, got {n}"
            )));
        }

        let basis = kernel.basis();
        let p = Array2::from_shape_fn((n, n_poly), |(i, k)| kernel.poly_eval(&basis[k], &sites[i]));
        if PivotedQr::new(p.clone()).rank(1e-10) < n_poly {
            return Err(Error::numerical(
                "polynomial block is rank deficient; GCV is undefined on these sites",
            ));
        }

        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v = kernel.eval((sites[i] - sites[j]).norm());
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }

        let qr = HouseholderQr::new(p);
        qr.apply_qt_two_sided(&mut a);
        let m = n - n_poly;
        let projected = a.slice(ndarray::s![n_poly.., n_poly..]).to_owned();

        let mut f = Array1::from_iter(values.iter().copied());
        qr.apply_qt_vec(&mut f);
        let q2t_f = f.slice(ndarray::s![n_poly..]).to_owned();

        let (eig_vals, eig_vecs) = eigh_sym(projected)?;
        debug_assert_eq!(eig_vals.len(), m);
        let g = eig_vecs.t().dot(&q2t_f);

        Ok(GcvContext {
            n_sites: n,
            inv_theta: kernel.inv_theta(),
            eig_vals,
            g,
        })
    }

    /// V(rho) for rho > 0.
    pub fn objective(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::invalid(format!("GCV needs rho > 0, got {rho}")));
        }
        let n = self.n_sites as f64;
        let c = rho * n * self.inv_theta;
        let mut residual2 = 0.0;
        let mut trace = 0.0;
        for (&mu, &g) in self.eig_vals.iter().zip(self.g.iter()) {
            let denom = mu + c;
            if denom == 0.0 {
                return Err(Error::numerical(format!(
                    "I - B(rho) is singular at rho = {rho}"
                )));
            }
            residual2 += (g / denom) * (g / denom);
            trace += 1.0 / denom;
        }
        let value = n * c * c * residual2 / (c * trace * (c * trace));
        if !value.is_finite() {
            return Err(Error::numerical(format!("V({rho}) is not finite")));
        }
        Ok(value)
    }
}

/// V(rho) computed through the QR representation.
pub fn gcv_objective(
    sites: &[Point3<f64>],
    values: &[f64],
    kernel: &PhsKernel,
    rho: f64,
) -> Result<f64> {
    GcvContext::new(sites, values, kernel)?.objective(rho)
}

/// Minimise V over [rho_lo, rho_hi]: a coarse log-spaced scan brackets the
/// global minimum, then golden-section search refines it to `LOG_TOL` in
/// log10 space. Returns the best evaluated rho (an endpoint when V is
/// monotone over the bracket).
pub fn gcv_minimize(
    sites: &[Point3<f64>],
    values: &[f64],
    kernel: &PhsKernel,
    rho_lo: f64,
    rho_hi: f64,
) -> Result<f64> {
    if !(rho_lo > 0.0) || !(rho_hi > rho_lo) || !rho_hi.is_finite() {
        return Err(Error::invalid(format!(
            "need 0 < rho_lo < rho_hi, got [{rho_lo}, {rho_hi}]"
        )));
    }
    let ctx = GcvContext::new(sites, values, kernel)?;

    let lg_lo = rho_lo.log10();
    let lg_hi = rho_hi.log10();
    let mut best = (f64::INFINITY, lg_lo);
    let eval = |lg: f64, best: &mut (f64, f64)| -> Result<f64> {
        let v = ctx.objective(10f64.powf(lg))?;
        if v < best.0 {
            *best = (v, lg);
        }
        Ok(v)
    };

    let mut scan = Vec::with_capacity(SCAN_POINTS);
    let mut best_idx = 0;
    for i in 0..SCAN_POINTS {
        let lg = lg_lo + (lg_hi - lg_lo) * i as f64 / (SCAN_POINTS - 1) as f64;
        let v = eval(lg, &mut best)?;
        if v < scan.get(best_idx).copied().unwrap_or(f64::INFINITY) {
            best_idx = i;
        }
        scan.push(v);
    }

    let mut a = lg_lo + (lg_hi - lg_lo) * best_idx.saturating_sub(1) as f64 / (SCAN_POINTS - 1) as f64;
    let mut b = lg_lo + (lg_hi - lg_lo) * (best_idx + 1).min(SCAN_POINTS - 1) as f64 / (SCAN_POINTS - 1) as f64;

    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c, &mut best)?;
    let mut fd = eval(d, &mut best)?;
    while b - a > LOG_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c, &mut best)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d, &mut best)?;
        }
    }

    Ok(10f64.powf(best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::fit::{fit_local, LocalFrame};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_problem(n: usize, seed: u64) -> (Vec<Point3<f64>>, Vec<f64>) {
        let mut rng = crate::seeded_rng(seed);
        let sites: Vec<Point3<f64>> = (0..n)
            .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
            .collect();
        let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        (sites, values)
    }

    /// Brute-force oracle: build B column by column by fitting to unit
    /// vectors and evaluating the spline at every site, then form V from the
    /// definition. Independent of the QR/eigen route.
    fn brute_force_v(sites: &[Point3<f64>], values: &[f64], kernel: &PhsKernel, rho: f64) -> f64 {
        let n = sites.len();
        let mut b = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut unit = vec![0.0; n];
            unit[j] = 1.0;
            let spline = fit_local(sites, &unit, kernel, rho, &LocalFrame::identity()).unwrap();
            for (i, site) in sites.iter().enumerate() {
                b[i][j] = spline.eval(site);
            }
        }
        let mut residual2 = 0.0;
        for i in 0..n {
            let fitted: f64 = (0..n).map(|j| b[i][j] * values[j]).sum();
            residual2 += (values[i] - fitted) * (values[i] - fitted);
        }
        let trace: f64 = (0..n).map(|i| 1.0 - b[i][i]).sum();
        n as f64 * residual2 / (trace * trace)
    }

    #[test]
    fn qr_route_matches_brute_force_influence_matrix() {
        for (n, m, seed) in [(60, 3, 1u64), (80, 2, 2)] {
            let kernel = PhsKernel::new(m, 3).unwrap();
            let (sites, values) = random_problem(n, seed);
            let ctx = GcvContext::new(&sites, &values, &kernel).unwrap();
            for rho in [1e-5, 1e-3, 1e-1] {
                let qr_route = ctx.objective(rho).unwrap();
                let brute = brute_force_v(&sites, &values, &kernel, rho);
                assert_relative_eq!(qr_route, brute, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn polynomial_data_gives_zero_objective() {
        let kernel = PhsKernel::new(3, 3).unwrap();
        let (sites, _) = random_problem(90, 3);
        let values: Vec<f64> = sites.iter().map(|p| 1.0 + p.x - 2.0 * p.y * p.z).collect();
        for rho in [1e-6, 1e-3, 1e-1] {
            let v = gcv_objective(&sites, &values, &kernel, rho).unwrap();
            assert!(v.abs() < 1e-18, "V = {v} should vanish on polynomial data");
        }
    }

    #[test]
    fn rank_deficient_sites_are_rejected() {
        let mut rng = crate::seeded_rng(4);
        let kernel = PhsKernel::new(3, 3).unwrap();
        let sites: Vec<Point3<f64>> = (0..50)
            .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), 0.0))
            .collect();
        let values = vec![1.0; 50];
        assert!(GcvContext::new(&sites, &values, &kernel).is_err());
    }

    #[test]
    fn minimizer_returns_lower_bound_for_increasing_v() {
        // Smooth noiseless data: more smoothing only hurts, so V increases
        // and the minimiser must sit at the lower bracket edge.
        let kernel = PhsKernel::new(3, 3).unwrap();
        let (sites, _) = random_problem(120, 5);
        let values: Vec<f64> = sites.iter().map(|p| (3.0 * p.x).sin() * p.y).collect();
        let lo = 1e-6;
        let rho = gcv_minimize(&sites, &values, &kernel, lo, 1e-1).unwrap();
        assert_eq!(rho, lo, "monotone V should return the lower boundary");
    }

    #[test]
    fn minimizer_beats_a_dense_grid() {
        // Noisy samples of a smooth function give an interior optimum.
        let kernel = PhsKernel::new(3, 3).unwrap();
        let mut rng = crate::seeded_rng(6);
        let (sites, _) = random_problem(150, 7);
        let values: Vec<f64> = sites
            .iter()
            .map(|p| (2.0 * p.x).sin() + p.y * p.z + 0.05 * (rng.gen::<f64>() - 0.5))
            .collect();
        let ctx = GcvContext::new(&sites, &values, &kernel).unwrap();
        let rho = gcv_minimize(&sites, &values, &kernel, 1e-6, 1e-1).unwrap();
        let v_star = ctx.objective(rho).unwrap();
        let grid_min = (0..50)
            .map(|i| {
                let lg = -6.0 + 5.0 * i as f64 / 49.0;
                ctx.objective(10f64.powf(lg)).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            v_star <= grid_min + 1e-9,
            "V(rho*) = {v_star} exceeds dense-grid minimum {grid_min}"
        );
    }

    #[test]
    fn invalid_bracket_is_an_error() {
        let kernel = PhsKernel::new(3, 3).unwrap();
        let (sites, values) = random_problem(40, 8);
        assert!(gcv_minimize(&sites, &values, &kernel, 0.0, 1e-1).is_err());
        assert!(gcv_minimize(&sites, &values, &kernel, 1e-1, 1e-3).is_err());
    }
}
