//! Outlier rejection and grid-average downsampling.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;

/// Outcome of outlier rejection. A point is removed exactly when its mean
/// distance to the k nearest neighbours (self excluded) exceeds
/// `mean + threshold * std_dev`.
#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub kept_ids: Vec<usize>,
    pub removed_ids: Vec<usize>,
    /// Per-point mean neighbour distance, in input order.
    pub mean_neighbor_distance: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    /// The decision cutoff `mean + threshold * std_dev`.
    pub cutoff: f64,
}

/// Remove points whose neighbourhood statistic marks them as outliers.
///
/// The statistic excludes the point itself: a self-distance of zero would
/// bias the mean toward keeping dense duplicates.
pub fn remove_outliers(
    cloud: &PointCloud,
    k: usize,
    threshold: f64,
) -> Result<(PointCloud, OutlierReport)> {
    let n = cloud.len();
    if k == 0 {
        return Err(Error::invalid("neighbour count k must be positive"));
    }
    if k >= n {
        return Err(Error::invalid(format!(
            "neighbour count k = {k} must be smaller than the cloud size {n}"
        )));
    }
    if !threshold.is_finite() {
        return Err(Error::invalid("threshold must be finite"));
    }

    let index = SpatialIndex::build(cloud.points())?;
    let stats: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let hits = index
                .knn(&cloud.point(i), k + 1)
                .expect("k + 1 <= n by precondition");
            let sum: f64 = hits
                .iter()
                .filter(|&&(id, _)| id != i)
                .take(k)
                .map(|&(_, d)| d)
                .sum();
            sum / k as f64
        })
        .collect();

    let mean = stats.iter().sum::<f64>() / n as f64;
    let variance = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
    let std_dev = variance.sqrt();
    let cutoff = mean + threshold * std_dev;

    let mut kept_ids = Vec::with_capacity(n);
    let mut removed_ids = Vec::new();
    for (i, &s) in stats.iter().enumerate() {
        if s > cutoff {
            removed_ids.push(i);
        } else {
            kept_ids.push(i);
        }
    }

    let filtered = cloud.select(&kept_ids);
    Ok((
        filtered,
        OutlierReport {
            kept_ids,
            removed_ids,
            mean_neighbor_distance: stats,
            mean,
            std_dev,
            cutoff,
        },
    ))
}

/// Grid-average downsample anchored at the cloud's bounding-box minimum.
pub fn grid_downsample(cloud: &PointCloud, step: f64) -> Result<PointCloud> {
    let origin = cloud
        .bounds()
        .map(|(lo, _)| lo)
        .unwrap_or_else(Point3::origin);
    grid_downsample_with_origin(cloud, step, &origin)
}

/// Grid-average downsample with an explicit grid origin.
///
/// One output point per occupied cubic cell: the centroid of the cell's
/// points, carrying the renormalised mean normal when the cloud has normals.
/// A cell whose normals cancel exactly yields a flagged normal-less point.
pub fn grid_downsample_with_origin(
    cloud: &PointCloud,
    step: f64,
    origin: &Point3<f64>,
) -> Result<PointCloud> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("grid step must be > 0, got {step}")));
    }

    struct CellAccum {
        position_sum: Vector3<f64>,
        normal_sum: Vector3<f64>,
        count: usize,
    }

    let with_normals = cloud.has_normals();
    let mut cells: HashMap<(i64, i64, i64), CellAccum> = HashMap::new();
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let key = (
            ((p.x - origin.x) / step).floor() as i64,
            ((p.y - origin.y) / step).floor() as i64,
            ((p.z - origin.z) / step).floor() as i64,
        );
        let cell = cells.entry(key).or_insert(CellAccum {
            position_sum: Vector3::zeros(),
            normal_sum: Vector3::zeros(),
            count: 0,
        });
        cell.position_sum += p.coords;
        if let Some(n) = cloud.normal(i) {
            cell.normal_sum += n;
        }
        cell.count += 1;
    }

    // Deterministic output order regardless of hash iteration.
    let mut keys: Vec<(i64, i64, i64)> = cells.keys().copied().collect();
    keys.sort_unstable();

    let mut points = Vec::with_capacity(keys.len());
    let mut normals = Vec::with_capacity(keys.len());
    for key in keys {
        let cell = &cells[&key];
        points.push(Point3::from(cell.position_sum / cell.count as f64));
        if with_normals {
            let norm = cell.normal_sum.norm();
            if norm > 1e-12 {
                normals.push(Some(cell.normal_sum / norm));
            } else {
                normals.push(None); // cancelled exactly; re-estimated later
            }
        }
    }

    let mut out = PointCloud::new(points)?;
    if with_normals {
        out.set_normals(normals)?;
    }
    Ok(out)
}
