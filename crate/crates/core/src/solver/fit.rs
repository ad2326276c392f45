//! Assembly and solution of one local smoothing-spline system.
//!
//! For sites x_i and samples f_i the coefficients solve the saddle system
//!
//! ```text
//!   [ A + (rho N / theta) I   P ] [ lambda ]   [ f ]
//!   [ P^T                     0 ] [ a      ] = [ 0 ]
//! ```
//!
//! with A_ij = phi(|x_i - x_j|) and P_ik the polynomial tail evaluated at the
//! sites. rho = 0 reproduces exact interpolation. The system is solved dense
//! with a symmetric-indefinite (Bunch-Kaufman) factorization; subdomain sizes
//! are capped by the partition so no fast multipole machinery is needed.

use nalgebra::{Matrix3, Point3, Vector3};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::solver::kernel::PhsKernel;
use crate::solver::linalg::{solve_sym_indef, PivotedQr};

/// Relative tolerance for detecting a rank-deficient polynomial block.
const RANK_TOL: f64 = 1e-10;

/// Affine map into a subdomain-local coordinate frame. Shifting to the
/// subdomain centre and scaling by 1/radius keeps the kernel matrix entries
/// of every subdomain on a common scale, which tames conditioning.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    pub center: Point3<f64>,
    pub scale: f64,
}

impl LocalFrame {
    pub fn identity() -> Self {
        LocalFrame {
            center: Point3::origin(),
            scale: 1.0,
        }
    }

    pub fn new(center: Point3<f64>, scale: f64) -> Self {
        let scale = if scale.is_finite() && scale > 0.0 {
            scale
        } else {
            1.0
        };
        LocalFrame { center, scale }
    }

    #[inline]
    pub fn to_local(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p - self.center) / self.scale)
    }
}

/// The assembled dense saddle-point system, exposed for oracles and tests.
pub struct SaddleSystem {
    pub matrix: Array2<f64>,
    pub rhs: Array1<f64>,
    pub n_sites: usize,
    pub n_poly: usize,
}

/// Assemble the full-basis system for the given sites (no frame mapping).
pub fn assemble_system(
    sites: &[Point3<f64>],
    values: &[f64],
    kernel: &PhsKernel,
    rho: f64,
) -> Result<SaddleSystem> {
    let active: Vec<usize> = (0..kernel.poly_count()).collect();
    assemble_active(sites, values, kernel, rho, &active)
}

fn assemble_active(
    sites: &[Point3<f64>],
    values: &[f64],
    kernel: &PhsKernel,
    rho: f64,
    active: &[usize],
) -> Result<SaddleSystem> {
    let n = sites.len();
    let n_poly = active.len();
    if kernel.dimension() != 3 {
        return Err(Error::invalid("spline fitting operates in dimension 3"));
    }
    if values.len() != n {
        return Err(Error::invalid("site and value counts differ"));
    }
    // Assembly is well-defined for any site count; unisolvency is the
    // solver's concern (fit_local checks it before factorizing).
    if rho < 0.0 || !rho.is_finite() {
        return Err(Error::invalid(format!("smoothing must be >= 0, got {rho}")));
    }

    let size = n + n_poly;
    let mut k = Array2::<f64>::zeros((size, size));
    // ridge shift, signed through 1/theta
    let shift = rho * n as f64 * kernel.inv_theta();
    for i in 0..n {
        k[(i, i)] = shift; // phi(0) = 0 for every supported kernel
        for j in (i + 1)..n {
            let v = kernel.eval((sites[i] - sites[j]).norm());
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let basis = kernel.basis();
    for (col, &b) in active.iter().enumerate() {
        let exps = &basis[b];
        for i in 0..n {
            let v = kernel.poly_eval(exps, &sites[i]);
            k[(i, n + col)] = v;
            k[(n + col, i)] = v;
        }
    }

    let mut rhs = Array1::<f64>::zeros(size);
    for i in 0..n {
        rhs[i] = values[i];
    }

    Ok(SaddleSystem {
        matrix: k,
        rhs,
        n_sites: n,
        n_poly,
    })
}

/// A fitted polyharmonic spline over one subdomain. Coefficients live in the
/// local frame; evaluation maps global inputs through it.
#[derive(Debug, Clone)]
pub struct LocalSpline {
    pub subdomain_id: usize,
    kernel: PhsKernel,
    frame: LocalFrame,
    centers: Vec<Point3<f64>>,
    lambda: Vec<f64>,
    poly_coeffs: Vec<f64>,
    active_basis: Vec<usize>,
    pub smoothing: f64,
}

impl LocalSpline {
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn poly_coeffs(&self) -> &[f64] {
        &self.poly_coeffs
    }

    pub fn active_basis(&self) -> &[usize] {
        &self.active_basis
    }

    pub fn kernel(&self) -> &PhsKernel {
        &self.kernel
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    /// || P^T lambda || relative to ||P||_F ||lambda||; near zero for a
    /// correctly solved system.
    pub fn orthogonality_residual(&self) -> f64 {
        let basis = self.kernel.basis();
        let mut num2 = 0.0;
        let mut p_norm2 = 0.0;
        for &b in &self.active_basis {
            let exps = &basis[b];
            let mut dot = 0.0;
            for (center, &l) in self.centers.iter().zip(&self.lambda) {
                let v = self.kernel.poly_eval(exps, center);
                dot += v * l;
                p_norm2 += v * v;
            }
            num2 += dot * dot;
        }
        let lambda_norm = self.lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
        num2.sqrt() / (p_norm2.sqrt() * lambda_norm + f64::MIN_POSITIVE)
    }

    pub fn eval(&self, x: &Point3<f64>) -> f64 {
        let u = self.frame.to_local(x);
        let mut value = 0.0;
        for (center, &l) in self.centers.iter().zip(&self.lambda) {
            value += l * self.kernel.eval((u - center).norm());
        }
        let basis = self.kernel.basis();
        for (&b, &a) in self.active_basis.iter().zip(&self.poly_coeffs) {
            value += a * self.kernel.poly_eval(&basis[b], &u);
        }
        value
    }

    pub fn gradient(&self, x: &Point3<f64>) -> Vector3<f64> {
        self.value_grad_hess(x).1
    }

    /// Value, gradient, and Hessian in global coordinates.
    pub fn value_grad_hess(&self, x: &Point3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let u = self.frame.to_local(x);
        let mut value = 0.0;
        let mut grad = Vector3::zeros();
        let mut hess = Matrix3::zeros();

        for (center, &l) in self.centers.iter().zip(&self.lambda) {
            let delta = u - center;
            let r = delta.norm();
            value += l * self.kernel.eval(r);
            if r == 0.0 {
                continue; // kernel kinks/limits at the centre contribute zero
            }
            let derivs = self.kernel.radial_derivs(r);
            grad += l * derivs.d1_over_r * delta;
            let outer_scale = (derivs.d2 - derivs.d1_over_r) / (r * r);
            hess += l * (outer_scale * delta * delta.transpose() + derivs.d1_over_r * Matrix3::identity());
        }

        let basis = self.kernel.basis();
        for (&b, &a) in self.active_basis.iter().zip(&self.poly_coeffs) {
            let exps = &basis[b];
            value += a * self.kernel.poly_eval(exps, &u);
            grad += a * self.kernel.poly_gradient(exps, &u);
            hess += a * self.kernel.poly_hessian(exps, &u);
        }

        let s = self.frame.scale;
        (value, grad / s, hess / (s * s))
    }
}

/// Fit one local spline. Sites are mapped through `frame` before assembly;
/// a rank-deficient polynomial block (near-planar or degenerate site sets)
/// falls back to the independent pivot columns of the basis.
pub fn fit_local(
    sites: &[Point3<f64>],
    values: &[f64],
    kernel: &PhsKernel,
    rho: f64,
    frame: &LocalFrame,
) -> Result<LocalSpline> {
    let local_sites: Vec<Point3<f64>> = sites.iter().map(|p| frame.to_local(p)).collect();

    let n = local_sites.len();
    let n_poly_full = kernel.poly_count();
    if n < n_poly_full {
        return Err(Error::invalid(format!(
            "{n} sites cannot support a degree-{} polynomial tail ({n_poly_full} terms)",
            kernel.order() - 1
        )));
    }

    // Rank of the polynomial block via column-pivoted QR.
    let basis = kernel.basis();
    let p = Array2::from_shape_fn((n, n_poly_full), |(i, k)| {
        kernel.poly_eval(&basis[k], &local_sites[i])
    });
    let qr = PivotedQr::new(p);
    let rank = qr.rank(RANK_TOL);
    if rank == 0 {
        return Err(Error::numerical(
            "polynomial block has rank 0; sites are fully degenerate",
        ));
    }
    let mut active: Vec<usize> = qr.pivots[..rank].to_vec();
    active.sort_unstable();
    if rank < n_poly_full {
        log::debug!(
            "polynomial block rank {rank} < {n_poly_full}; truncating basis to pivots {active:?}"
        );
    }

    let system = assemble_active(&local_sites, values, kernel, rho, &active)?;
    let solution = solve_sym_indef(&system.matrix, &system.rhs)
        .map_err(|e| Error::numerical(format!("local system with {n} sites: {e}")))?;

    let lambda = solution.slice(ndarray::s![..n]).to_vec();
    let poly_coeffs = solution.slice(ndarray::s![n..]).to_vec();

    let spline = LocalSpline {
        subdomain_id: 0,
        kernel: kernel.clone(),
        frame: *frame,
        centers: local_sites,
        lambda,
        poly_coeffs,
        active_basis: active,
        smoothing: rho,
    };

    let ortho = spline.orthogonality_residual();
    if ortho > 1e-8 {
        log::warn!("orthogonality residual {ortho:.3e} above 1e-8 for a {n}-site fit");
    }

    Ok(spline)
}
