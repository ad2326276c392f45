//! Point cloud and augmented constraint-set types.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// How far a stored unit normal may deviate from length 1.
pub const NORMAL_UNIT_TOL: f64 = 1e-9;

/// An immutable cloud of 3-D points with optional per-point unit normals.
///
/// Normals are all-or-nothing at the cloud level, but an individual point may
/// be flagged normal-less (e.g. a downsampled cell whose member normals
/// cancelled exactly); such points carry `None` until re-estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    /// Empty when the cloud carries no normals; otherwise one entry per point.
    normals: Vec<Option<Vector3<f64>>>,
}

impl PointCloud {
    /// Build a cloud without normals. All coordinates must be finite.
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(PointCloud {
            points,
            normals: Vec::new(),
        })
    }

    /// Build a cloud with one unit normal per point.
    pub fn with_normals(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        cloud.set_normals(normals.into_iter().map(Some).collect())?;
        Ok(cloud)
    }

    /// Attach a full normal list (entries may be `None` for flagged points).
    pub fn set_normals(&mut self, normals: Vec<Option<Vector3<f64>>>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(Error::invalid(format!(
                "normal count {} does not match point count {}",
                normals.len(),
                self.points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            if let Some(n) = n {
                if !n.iter().all(|c| c.is_finite()) {
                    return Err(Error::invalid(format!("normal {i} is non-finite")));
                }
                if (n.norm() - 1.0).abs() > NORMAL_UNIT_TOL {
                    return Err(Error::invalid(format!(
                        "normal {i} has norm {} (must be 1 within {NORMAL_UNIT_TOL:e})",
                        n.norm()
                    )));
                }
            }
        }
        self.normals = normals;
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: usize) -> Point3<f64> {
        self.points[i]
    }

    /// `None` when the cloud has no normals at all, or the point is flagged.
    #[inline]
    pub fn normal(&self, i: usize) -> Option<Vector3<f64>> {
        self.normals.get(i).copied().flatten()
    }

    pub fn normals(&self) -> &[Option<Vector3<f64>>] {
        &self.normals
    }

    /// True when every point carries a normal.
    pub fn has_normals(&self) -> bool {
        !self.points.is_empty()
            && self.normals.len() == self.points.len()
            && self.normals.iter().all(|n| n.is_some())
    }

    /// True when at least one point carries a normal.
    pub fn has_any_normals(&self) -> bool {
        self.normals.iter().any(|n| n.is_some())
    }

    /// Indices of points whose normal is missing or flagged.
    pub fn missing_normal_ids(&self) -> Vec<usize> {
        if self.normals.is_empty() {
            return (0..self.points.len()).collect();
        }
        self.normals
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.is_none().then_some(i))
            .collect()
    }

    /// Flip the normal of point `i` in place.
    pub fn flip_normal(&mut self, i: usize) {
        if let Some(Some(n)) = self.normals.get_mut(i) {
            *n = -*n;
        }
    }

    pub(crate) fn set_normal(&mut self, i: usize, n: Option<Vector3<f64>>) {
        if self.normals.len() != self.points.len() {
            self.normals = vec![None; self.points.len()];
        }
        self.normals[i] = n;
    }

    /// Restrict the cloud to the given point indices, preserving order.
    pub fn select(&self, ids: &[usize]) -> PointCloud {
        let points = ids.iter().map(|&i| self.points[i]).collect();
        let normals = if self.normals.is_empty() {
            Vec::new()
        } else {
            ids.iter().map(|&i| self.normals[i]).collect()
        };
        PointCloud { points, normals }
    }

    /// Axis-aligned bounding box, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        bounds_of(&self.points)
    }
}

/// Bounding box of a point slice.
pub fn bounds_of(points: &[Point3<f64>]) -> Option<(Point3<f64>, Point3<f64>)> {
    let first = *points.first()?;
    let mut lo = first;
    let mut hi = first;
    for p in &points[1..] {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Some((lo, hi))
}

/// On- and off-surface interpolation constraints.
///
/// Sites hold the original surface points (value 0) followed by the surviving
/// offset points (values +L then -L, interleaved per parent).
#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    sites: Vec<Point3<f64>>,
    values: Vec<f64>,
    offset: f64,
    n_on: usize,
    n_off: usize,
}

impl AugmentedDataset {
    pub fn new(
        sites: Vec<Point3<f64>>,
        values: Vec<f64>,
        offset: f64,
        n_on: usize,
        n_off: usize,
    ) -> Result<Self> {
        if sites.len() != values.len() {
            return Err(Error::invalid(format!(
                "site count {} does not match value count {}",
                sites.len(),
                values.len()
            )));
        }
        if offset <= 0.0 || !offset.is_finite() {
            return Err(Error::invalid(format!("offset L must be > 0, got {offset}")));
        }
        if n_on + n_off != sites.len() {
            return Err(Error::invalid("constraint counts do not add up"));
        }
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 && v != offset && v != -offset {
                return Err(Error::invalid(format!(
                    "constraint {i} has value {v}, expected 0 or +/-{offset}"
                )));
            }
        }
        Ok(AugmentedDataset {
            sites,
            values,
            offset,
            n_on,
            n_off,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    #[inline]
    pub fn sites(&self) -> &[Point3<f64>] {
        &self.sites
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The off-surface distance L.
    #[inline]
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.n_on, self.n_off)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_points() {
        let err = PointCloud::new(vec![Point3::new(0.0, f64::NAN, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn rejects_non_unit_normals() {
        let err = PointCloud::with_normals(
            vec![Point3::origin()],
            vec![Vector3::new(0.0, 0.0, 2.0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn normal_bookkeeping() {
        let mut cloud = PointCloud::new(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(!cloud.has_normals());
        assert_eq!(cloud.missing_normal_ids(), vec![0, 1]);
        cloud
            .set_normals(vec![Some(Vector3::z()), None])
            .unwrap();
        assert!(!cloud.has_normals());
        assert!(cloud.has_any_normals());
        assert_eq!(cloud.missing_normal_ids(), vec![1]);
        cloud.set_normal(1, Some(Vector3::x()));
        assert!(cloud.has_normals());
        cloud.flip_normal(0);
        assert_eq!(cloud.normal(0), Some(-Vector3::z()));
    }

    #[test]
    fn augmented_values_must_be_zero_or_offset() {
        let sites = vec![Point3::origin(), Point3::new(0.0, 0.0, 1.0)];
        let err = AugmentedDataset::new(sites.clone(), vec![0.0, 0.5], 1.0, 1, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        AugmentedDataset::new(sites, vec![0.0, 1.0], 1.0, 1, 1).unwrap();
    }
}
