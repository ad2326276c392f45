//! Octree-like construction of overlapping spherical subdomains and the
//! compactly supported partition-of-unity weights.
//!
//! The splitting loop starts from the tight bounding cube and repeatedly
//! splits the cube whose covering sphere (radius sqrt(3) * side / 2) holds
//! the most sites into 8 children, until no covering sphere holds more than
//! `n_max`. Empty spheres are dropped, spheres with fewer than `n_min` sites
//! grow to the distance of their n_min-th nearest site, and finally every
//! radius is multiplied by `expand` to guarantee overlap between neighbours.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::cloud::bounds_of;
use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;

/// Relative floor applied to degenerate (zero) radii so weight evaluation
/// stays finite when every member site coincides.
const RADIUS_FLOOR_REL: f64 = 1e-12;

/// Blending weight kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// (1-r)^4 (4r+1): C2 continuity.
    WendlandC2,
    /// (1-r)^6 (35r^2+18r+3): C4 continuity.
    WendlandC4,
}

/// Wendland kernel value; compactly supported on [0, 1].
pub fn wendland(r: f64, kind: WeightKind) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::invalid(format!("wendland needs r >= 0, got {r}")));
    }
    if r >= 1.0 {
        return Ok(0.0);
    }
    let s = 1.0 - r;
    Ok(match kind {
        WeightKind::WendlandC2 => s.powi(4) * (4.0 * r + 1.0),
        WeightKind::WendlandC4 => s.powi(6) * (35.0 * r * r + 18.0 * r + 3.0),
    })
}

/// First and second derivatives of the Wendland kernels on [0, 1).
fn wendland_derivs(r: f64, kind: WeightKind) -> (f64, f64) {
    if r >= 1.0 {
        return (0.0, 0.0);
    }
    let s = 1.0 - r;
    match kind {
        WeightKind::WendlandC2 => (-20.0 * r * s.powi(3), -20.0 * s * s * (1.0 - 4.0 * r)),
        WeightKind::WendlandC4 => (
            -56.0 * r * (5.0 * r + 1.0) * s.powi(5),
            -56.0 * s.powi(4) * (1.0 + 4.0 * r - 35.0 * r * r),
        ),
    }
}

/// One spherical subdomain.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub center: Point3<f64>,
    pub radius: f64,
    /// Constraint-site ids with |x - c| / r <= 1, ascending.
    pub member_ids: Vec<usize>,
    /// Smoothing parameter used by the fitted local spline, once fitted.
    pub smoothing: Option<f64>,
}

/// The complete cover. Subdomain lookup is accelerated by a k-d tree over the
/// centres; the structure is immutable once built.
#[derive(Debug, Clone)]
pub struct Partition {
    subdomains: Vec<Subdomain>,
    weight_kind: WeightKind,
    expand: f64,
    center_index: SpatialIndex,
    max_radius: f64,
}

/// Cube state at split-loop exit, kept for the partition invariant checks.
#[derive(Debug, Clone)]
pub struct BuildTrace {
    /// (center, covering radius, site count) of every cube alive when the
    /// split loop stopped, before deletion/growth/expansion.
    pub split_exit: Vec<(Point3<f64>, f64, usize)>,
}

struct Cube {
    center: Point3<f64>,
    side: f64,
    count: usize,
    alive: bool,
}

impl Cube {
    fn radius(&self) -> f64 {
        3f64.sqrt() * self.side / 2.0
    }
}

/// Build the partition over the given sites (the full augmented constraint
/// set in the pipeline).
pub fn build_partition(
    sites: &[Point3<f64>],
    n_min: usize,
    n_max: usize,
    expand: f64,
    weight_kind: WeightKind,
) -> Result<Partition> {
    Ok(build_partition_traced(sites, n_min, n_max, expand, weight_kind)?.0)
}

/// As `build_partition`, returning the split-loop exit state as well.
pub fn build_partition_traced(
    sites: &[Point3<f64>],
    n_min: usize,
    n_max: usize,
    expand: f64,
    weight_kind: WeightKind,
) -> Result<(Partition, BuildTrace)> {
    if sites.is_empty() {
        return Err(Error::invalid("cannot partition an empty site set"));
    }
    if n_min > n_max {
        return Err(Error::invalid(format!("nMin {n_min} exceeds nMax {n_max}")));
    }
    if n_min == 0 {
        return Err(Error::invalid("nMin must be positive"));
    }
    if !(expand >= 1.0) || !expand.is_finite() {
        return Err(Error::invalid(format!("expand must be >= 1, got {expand}")));
    }

    let index = SpatialIndex::build(sites)?;
    let (lo, hi) = bounds_of(sites).expect("non-empty");
    let center = Point3::from((lo.coords + hi.coords) / 2.0);
    let side = (hi - lo).amax().max(0.0) * 1.0;
    let min_side = side * RADIUS_FLOOR_REL;

    let mut cubes: Vec<Cube> = Vec::new();
    // max-heap on (count, Reverse(creation index)): ties go to the oldest,
    // matching a first-max linear scan
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = BinaryHeap::new();

    let root = Cube {
        center,
        side,
        count: index.count_within(&center, 3f64.sqrt() * side / 2.0)?,
        alive: true,
    };
    heap.push((root.count, Reverse(0)));
    cubes.push(root);

    while let Some(&(count, Reverse(idx))) = heap.peek() {
        if count <= n_max {
            break;
        }
        heap.pop();
        if !cubes[idx].alive {
            continue;
        }
        if cubes[idx].side <= min_side {
            // cannot split further (coincident sites); leave it alive and
            // stop considering it
            continue;
        }
        cubes[idx].alive = false;
        let parent_center = cubes[idx].center;
        let child_side = cubes[idx].side / 2.0;
        let child_radius = 3f64.sqrt() * child_side / 2.0;
        for corner in 0..8u8 {
            let offset = Vector3::new(
                if corner & 1 == 0 { -1.0 } else { 1.0 },
                if corner & 2 == 0 { -1.0 } else { 1.0 },
                if corner & 4 == 0 { -1.0 } else { 1.0 },
            ) * (child_side / 2.0);
            let child_center = parent_center + offset;
            let child = Cube {
                center: child_center,
                side: child_side,
                count: index.count_within(&child_center, child_radius)?,
                alive: true,
            };
            heap.push((child.count, Reverse(cubes.len())));
            cubes.push(child);
        }
    }

    let split_exit: Vec<(Point3<f64>, f64, usize)> = cubes
        .iter()
        .filter(|c| c.alive)
        .map(|c| (c.center, c.radius(), c.count))
        .collect();

    // Deletion, growth, expansion.
    let n = sites.len();
    let mut subdomains: Vec<Subdomain> = Vec::new();
    for (center, radius, count) in &split_exit {
        if *count == 0 {
            continue;
        }
        let mut radius = *radius;
        if *count < n_min {
            let k = n_min.min(n);
            let hits = index.knn(center, k)?;
            radius = hits.last().expect("k >= 1").1;
        }
        radius *= expand;
        if radius <= 0.0 {
            radius = min_side.max(f64::MIN_POSITIVE.sqrt());
        }
        let member_ids = index.radius_search(center, radius)?;
        debug_assert!(member_ids.len() >= n_min.min(n));
        subdomains.push(Subdomain {
            center: *center,
            radius,
            member_ids,
            smoothing: None,
        });
    }

    let centers: Vec<Point3<f64>> = subdomains.iter().map(|s| s.center).collect();
    let center_index = SpatialIndex::build(&centers)?;
    let max_radius = subdomains.iter().map(|s| s.radius).fold(0.0, f64::max);

    Ok((
        Partition {
            subdomains,
            weight_kind,
            expand,
            center_index,
            max_radius,
        },
        BuildTrace { split_exit },
    ))
}

/// Weight value together with its first two derivatives in global
/// coordinates, for blending fields and their curvature.
#[derive(Debug, Clone, Copy)]
pub struct WeightDerivs {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl Partition {
    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn subdomains_mut(&mut self) -> &mut [Subdomain] {
        &mut self.subdomains
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    pub fn weight_kind(&self) -> WeightKind {
        self.weight_kind
    }

    pub fn expand(&self) -> f64 {
        self.expand
    }

    /// Ids of the subdomains whose sphere contains `x`, ascending.
    pub fn covering(&self, x: &Point3<f64>) -> Vec<usize> {
        let candidates = self
            .center_index
            .radius_search(x, self.max_radius)
            .expect("max_radius is finite");
        candidates
            .into_iter()
            .filter(|&i| {
                let s = &self.subdomains[i];
                (x - s.center).norm() <= s.radius
            })
            .collect()
    }

    /// Unnormalised weight phi_i(x) = wendland(|x - c_i| / r_i).
    pub fn raw_weight(&self, i: usize, x: &Point3<f64>) -> f64 {
        let s = &self.subdomains[i];
        wendland((x - s.center).norm() / s.radius, self.weight_kind).expect("scaled r >= 0")
    }

    /// phi_i with gradient and Hessian in global coordinates.
    pub fn raw_weight_derivs(&self, i: usize, x: &Point3<f64>) -> WeightDerivs {
        let s = &self.subdomains[i];
        let delta = x - s.center;
        let dist = delta.norm();
        let u = dist / s.radius;
        let value = wendland(u, self.weight_kind).expect("scaled r >= 0");
        if u >= 1.0 {
            return WeightDerivs {
                value: 0.0,
                gradient: Vector3::zeros(),
                hessian: Matrix3::zeros(),
            };
        }
        let (d1, d2) = wendland_derivs(u, self.weight_kind);
        // chain rule through u = |x - c| / r
        let d1_over_dist = if dist > 0.0 {
            d1 / (s.radius * dist)
        } else {
            // both Wendland kernels have psi'(0) = 0; the limit of
            // psi'(u)/u as u -> 0 is psi''(0)
            d2 / (s.radius * s.radius)
        };
        let gradient = d1_over_dist * delta;
        let hessian = if dist > 0.0 {
            let outer = (d2 / (s.radius * s.radius) - d1_over_dist) / (dist * dist);
            outer * delta * delta.transpose() + d1_over_dist * Matrix3::identity()
        } else {
            d1_over_dist * Matrix3::identity()
        };
        WeightDerivs {
            value,
            gradient,
            hessian,
        }
    }

    /// Shepard-normalised weights at `x`: only the non-zero entries, summing
    /// to 1. Empty when `x` lies outside every subdomain.
    pub fn shepard_weights(&self, x: &Point3<f64>) -> Vec<(usize, f64)> {
        let ids = self.covering(x);
        let mut weights: Vec<(usize, f64)> = ids
            .into_iter()
            .map(|i| (i, self.raw_weight(i, x)))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let total: f64 = weights.iter().map(|&(_, w)| w).sum();
        if total <= 0.0 {
            // x sits exactly on every covering sphere's boundary; treat the
            // nearest subdomain as sole owner to keep the cover property
            if let Some((i, _)) = self
                .covering(x)
                .into_iter()
                .map(|i| (i, (x - self.subdomains[i].center).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
            {
                return vec![(i, 1.0)];
            }
            return Vec::new();
        }
        for (_, w) in weights.iter_mut() {
            *w /= total;
        }
        weights
    }
}
