//! Polyharmonic spline radial kernels and their polynomial tails.
//!
//! The kernel of order m in dimension d is phi(r) = r^(2m-d), picking up a
//! log r factor when 2m-d is even. An order-m spline carries every monomial
//! of total degree <= m-1; the fitted radial weights are constrained
//! orthogonal to that polynomial space. The signed constant theta scales the
//! ridge term of the smoothing system: the diagonal shift is
//! rho * N * (1/theta).

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

/// First and second radial derivatives of phi, in the form needed to expand
/// a radial function of x: grad = d1_over_r * (x - c), and the Hessian is
/// ((d2 - d1_over_r * r) / r^2) * dd^T + d1_over_r * I.
#[derive(Debug, Clone, Copy)]
pub struct RadialDerivs {
    pub d1_over_r: f64,
    pub d2: f64,
}

/// A polyharmonic spline kernel of order `m` in dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhsKernel {
    m: u32,
    d: u32,
    power: i32,
    log_weighted: bool,
    inv_theta: f64,
    /// Monomial exponents (x, y, z), graded-lexicographic. Populated for d=3.
    basis: Vec<[u32; 3]>,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Gamma at the negative half-integer d/2 - m for odd d, by downward
/// recursion from Gamma(1/2) = sqrt(pi).
fn gamma_half_integer(numerator: i64) -> f64 {
    // argument is numerator/2 with numerator odd
    debug_assert!(numerator % 2 != 0);
    let mut x = 0.5;
    let mut value = std::f64::consts::PI.sqrt();
    let target = numerator as f64 / 2.0;
    while x > target + 0.25 {
        x -= 1.0;
        value /= x;
    }
    value
}

impl PhsKernel {
    pub fn new(m: u32, d: u32) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::invalid(format!("kernel dimension must be 2 or 3, got {d}")));
        }
        if 2 * m <= d {
            return Err(Error::invalid(format!(
                "kernel order m={m} needs 2m - d > 0 in dimension {d}"
            )));
        }
        let power = (2 * m - d) as i32;
        let log_weighted = power % 2 == 0;

        let inv_theta = if log_weighted {
            // 1/theta = (-1)^(d/2+1+m) 2^(2m-1) pi^(d/2) (m-1)! (m-d/2)!
            let sign = if (d / 2 + 1 + m) % 2 == 0 { 1.0 } else { -1.0 };
            sign * 2f64.powi(2 * m as i32 - 1)
                * std::f64::consts::PI.powf(d as f64 / 2.0)
                * factorial(m - 1)
                * factorial(m - d / 2)
        } else {
            // 1/theta = 2^(2m) pi^(d/2) (m-1)! / Gamma(d/2 - m)
            let gamma = gamma_half_integer(d as i64 - 2 * m as i64);
            2f64.powi(2 * m as i32)
                * std::f64::consts::PI.powf(d as f64 / 2.0)
                * factorial(m - 1)
                / gamma
        };

        let basis = if d == 3 { monomials_upto(m - 1) } else { Vec::new() };

        Ok(PhsKernel {
            m,
            d,
            power,
            log_weighted,
            inv_theta,
            basis,
        })
    }

    #[inline]
    pub fn order(&self) -> u32 {
        self.m
    }

    #[inline]
    pub fn dimension(&self) -> u32 {
        self.d
    }

    /// The signed constant 1/theta of the ridge term.
    #[inline]
    pub fn inv_theta(&self) -> f64 {
        self.inv_theta
    }

    /// phi(r). The r -> 0 limit of the log-weighted kernels is taken as 0.
    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        if r == 0.0 {
            return 0.0;
        }
        let p = r.powi(self.power);
        if self.log_weighted {
            p * r.ln()
        } else {
            p
        }
    }

    /// Radial first/second derivatives; zero at r = 0 (the kink of the C0
    /// kernel and the log kernels is guarded by callers skipping exact hits).
    pub fn radial_derivs(&self, r: f64) -> RadialDerivs {
        if r == 0.0 {
            return RadialDerivs {
                d1_over_r: 0.0,
                d2: 0.0,
            };
        }
        let p = self.power;
        if self.log_weighted {
            // phi = r^p ln r
            let rp2 = r.powi(p - 2);
            let ln_r = r.ln();
            RadialDerivs {
                d1_over_r: rp2 * (p as f64 * ln_r + 1.0),
                d2: rp2 * ((p as f64 - 1.0) * (p as f64 * ln_r + 1.0) + p as f64),
            }
        } else {
            let rp2 = r.powi(p - 2);
            RadialDerivs {
                d1_over_r: p as f64 * rp2,
                d2: (p * (p - 1)) as f64 * rp2,
            }
        }
    }

    /// Dimension of the polynomial tail: C(d + m - 1, d).
    pub fn poly_count(&self) -> usize {
        let (d, m) = (self.d as u64, self.m as u64);
        let mut num = 1u64;
        let mut den = 1u64;
        for k in 1..=d {
            num *= d + m - 1 - (d - k);
            den *= k;
        }
        (num / den) as usize
    }

    /// Monomial exponents of the polynomial tail (d = 3 only).
    pub fn basis(&self) -> &[[u32; 3]] {
        &self.basis
    }

    pub fn poly_eval(&self, exps: &[u32; 3], p: &Point3<f64>) -> f64 {
        powi(p.x, exps[0] as i32) * powi(p.y, exps[1] as i32) * powi(p.z, exps[2] as i32)
    }

    pub fn poly_gradient(&self, exps: &[u32; 3], p: &Point3<f64>) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        for axis in 0..3 {
            let e = exps[axis];
            if e > 0 {
                let mut v = e as f64 * powi(p[axis], e as i32 - 1);
                for other in 0..3 {
                    if other != axis {
                        v *= powi(p[other], exps[other] as i32);
                    }
                }
                g[axis] = v;
            }
        }
        g
    }

    pub fn poly_hessian(&self, exps: &[u32; 3], p: &Point3<f64>) -> Matrix3<f64> {
        let mut h = Matrix3::zeros();
        for i in 0..3 {
            for j in i..3 {
                let mut e = [exps[0] as i32, exps[1] as i32, exps[2] as i32];
                let mut coeff = 1.0;
                for axis in [i, j] {
                    if e[axis] == 0 {
                        coeff = 0.0;
                        break;
                    }
                    coeff *= e[axis] as f64;
                    e[axis] -= 1;
                }
                if coeff != 0.0 {
                    let v = coeff
                        * powi(p.x, e[0])
                        * powi(p.y, e[1])
                        * powi(p.z, e[2]);
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
        }
        h
    }
}

#[inline]
fn powi(base: f64, exp: i32) -> f64 {
    debug_assert!(exp >= 0);
    if exp == 0 {
        1.0 // covers 0^0 = 1 for monomials
    } else {
        base.powi(exp)
    }
}

/// All monomial exponents in 3 variables with total degree <= `max_degree`,
/// graded-lexicographic (degree first, then x before y before z).
fn monomials_upto(max_degree: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for degree in 0..=max_degree {
        for a in (0..=degree).rev() {
            for b in (0..=degree - a).rev() {
                out.push([a, b, degree - a - b]);
            }
        }
    }
    out
}
