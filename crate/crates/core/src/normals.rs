//! Normal estimation, consistent orientation, and off-surface augmentation.
//!
//! Normals come from PCA over k-neighbourhoods and are then oriented by
//! propagating signs through a minimal spanning forest of a similarity graph
//! built on a coarse copy of the cloud: edge weight 1 - |n_i . n_j| is small
//! where the surface bends little, so the forest prefers to walk flat
//! regions and the breadth-first sweep rarely has to decide between genuinely
//! ambiguous neighbours. Forest components double as a leaf clustering.

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;

use crate::cloud::{AugmentedDataset, PointCloud};
use crate::error::{Error, Result};
use crate::preprocess::grid_downsample_with_origin;
use crate::spatial::SpatialIndex;

/// Per-point component ids from the minimal spanning forest, canonicalised so
/// that components are numbered by their smallest member id.
#[derive(Debug, Clone)]
pub struct ComponentLabels {
    labels: Vec<usize>,
    count: usize,
}

impl ComponentLabels {
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn component_count(&self) -> usize {
        self.count
    }

    /// Members of each component, in id order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    fn canonicalize(raw: &[usize]) -> Self {
        // order components by smallest member id
        let mut first_seen: Vec<(usize, usize)> = Vec::new(); // (raw label, first id)
        for (i, &c) in raw.iter().enumerate() {
            if !first_seen.iter().any(|&(rc, _)| rc == c) {
                first_seen.push((c, i));
            }
        }
        first_seen.sort_by_key(|&(_, first)| first);
        let mut map = std::collections::HashMap::new();
        for (new, &(raw_label, _)) in first_seen.iter().enumerate() {
            map.insert(raw_label, new);
        }
        ComponentLabels {
            labels: raw.iter().map(|c| map[c]).collect(),
            count: first_seen.len(),
        }
    }
}

/// The weighted similarity graph over the coarse cloud.
#[derive(Debug, Clone)]
pub struct OrientationGraph {
    /// Deduplicated undirected edges (i, j, weight), in creation order.
    pub edges: Vec<(usize, usize, f64)>,
    /// Distance cutoff: neighbours further than this are not connected.
    pub cutoff: f64,
}

/// Everything produced by the orientation pass. The coarse diagnostics allow
/// replaying the forest traversal in tests.
#[derive(Debug, Clone)]
pub struct OrientationOutcome {
    /// Full-resolution cloud with consistently oriented normals.
    pub cloud: PointCloud,
    /// Component labels for the full cloud (nearest coarse point's component).
    pub labels: ComponentLabels,
    /// The coarse cloud with its final (oriented) normals.
    pub coarse: PointCloud,
    /// Forest edges in the order the breadth-first sweep visited them.
    pub forest_edges: Vec<(usize, usize)>,
    /// Component labels of the coarse points.
    pub coarse_labels: ComponentLabels,
    /// The graph the forest was drawn from.
    pub graph: OrientationGraph,
}

/// Estimate unit normals by PCA over each point's k nearest neighbours
/// (the point itself included). The sign is arbitrary at this stage. A fully
/// degenerate neighbourhood (all points coincident) yields a flagged,
/// normal-less point.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let n = cloud.len();
    if k < 3 {
        return Err(Error::invalid("PCA needs k >= 3 neighbours"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the cloud size {n}"
        )));
    }
    let index = SpatialIndex::build(cloud.points())?;
    let normals: Vec<Option<Vector3<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| pca_normal(&index, &cloud.point(i), k))
        .collect();

    let mut out = cloud.clone();
    let flagged = normals.iter().filter(|n| n.is_none()).count();
    if flagged > 0 {
        log::warn!("{flagged} degenerate neighbourhoods produced no normal");
    }
    out.set_normals(normals)?;
    Ok(out)
}

fn pca_normal(index: &SpatialIndex, query: &Point3<f64>, k: usize) -> Option<Vector3<f64>> {
    let hits = index.knn(query, k).expect("k validated by caller");
    let mut centroid = Vector3::zeros();
    for &(id, _) in &hits {
        centroid += index.point(id).coords;
    }
    centroid /= hits.len() as f64;

    let mut cov = Matrix3::zeros();
    for &(id, _) in &hits {
        let d = index.point(id).coords - centroid;
        cov += d * d.transpose();
    }
    if cov.trace() <= 0.0 {
        return None; // all neighbours coincident
    }

    let eig = cov.symmetric_eigen();
    let mut smallest = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[smallest] {
            smallest = i;
        }
    }
    let v = eig.eigenvectors.column(smallest).into_owned();
    let norm = v.norm();
    if norm <= 0.0 {
        return None;
    }
    let mut n = v / norm;
    // canonical sign: largest-magnitude component positive, so estimation is
    // insensitive to eigenvector sign conventions
    let mut lead = 0;
    for i in 1..3 {
        if n[i].abs() > n[lead].abs() {
            lead = i;
        }
    }
    if n[lead] < 0.0 {
        n = -n;
    }
    Some(n)
}

/// Fill any missing normals by PCA estimation, leaving existing ones alone.
pub fn ensure_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if cloud.has_normals() {
        return Ok(cloud.clone());
    }
    let k = k.min(cloud.len());
    let estimated = estimate_normals(cloud, k)?;
    if !cloud.has_any_normals() {
        return Ok(estimated);
    }
    let mut out = cloud.clone();
    for i in cloud.missing_normal_ids() {
        out.set_normal(i, estimated.normal(i));
    }
    Ok(out)
}

/// Orient normals consistently by minimal-spanning-forest traversal.
///
/// A coarse copy (grid step `coarse_grid_step`) gets fresh PCA normals; the
/// similarity graph connects each coarse point to its `graph_nbrs` nearest
/// neighbours within `2 * coarse_grid_step`; a Kruskal forest per component
/// is swept breadth-first from the lowest member id, flipping a normal
/// whenever it disagrees with its tree parent; finally every full-resolution
/// normal within `coarse_grid_step` of a coarse point is flipped to agree
/// with it.
pub fn orient_normals(
    cloud: &PointCloud,
    coarse_grid_step: f64,
    graph_nbrs: usize,
    pca_nbrs: usize,
) -> Result<OrientationOutcome> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot orient an empty cloud"));
    }
    if graph_nbrs == 0 {
        return Err(Error::invalid("graphNbrs must be positive"));
    }
    let full = ensure_normals(cloud, pca_nbrs.min(cloud.len()).max(3))?;

    // Coarse copy with fresh PCA normals.
    let origin = full.bounds().expect("non-empty").0;
    let coarse_points = grid_downsample_with_origin(&full, coarse_grid_step, &origin)?;
    let coarse_k = pca_nbrs.min(coarse_points.len()).max(3.min(coarse_points.len()));
    let mut coarse = if coarse_points.len() >= 3 {
        estimate_normals(&coarse_points, coarse_k)?
    } else {
        // Too few coarse points for PCA; inherit the downsampled normals.
        coarse_points.clone()
    };
    if !coarse.has_normals() {
        return Err(Error::numerical(
            "coarse cloud has no estimable normals; cannot orient",
        ));
    }

    let nc = coarse.len();
    let coarse_index = SpatialIndex::build(coarse.points())?;
    let cutoff = 2.0 * coarse_grid_step;

    // Similarity graph.
    let k = (graph_nbrs + 1).min(nc);
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for i in 0..nc {
        let hits = coarse_index.knn(&coarse.point(i), k)?;
        let mut taken = 0;
        for &(j, dist) in &hits {
            if j == i {
                continue;
            }
            if taken >= graph_nbrs {
                break;
            }
            taken += 1;
            if dist > cutoff {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                let w = 1.0
                    - coarse
                        .normal(i)
                        .expect("coarse normals complete")
                        .dot(&coarse.normal(j).expect("coarse normals complete"))
                        .abs();
                edges.push((key.0, key.1, w));
            }
        }
    }

    // Kruskal minimal spanning forest with deterministic tie-breaking on the
    // edge creation index.
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&a, &b| edges[a].2.total_cmp(&edges[b].2).then(a.cmp(&b)));
    let mut parent: Vec<usize> = (0..nc).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nc];
    let mut forest: Vec<(usize, usize)> = Vec::new();
    for idx in order {
        let (i, j, _) = edges[idx];
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            adjacency[i].push(j);
            adjacency[j].push(i);
            forest.push((i, j));
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable(); // deterministic BFS order
    }

    // Breadth-first sweep per component, rooted at the lowest member id.
    let mut raw_coarse_labels = vec![usize::MAX; nc];
    let mut forest_edges: Vec<(usize, usize)> = Vec::new();
    let mut visited = vec![false; nc];
    let mut component = 0usize;
    for root in 0..nc {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        raw_coarse_labels[root] = component;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            let ni = coarse.normal(i).expect("coarse normals complete");
            for &j in &adjacency[i] {
                if visited[j] {
                    continue;
                }
                visited[j] = true;
                raw_coarse_labels[j] = component;
                if ni.dot(&coarse.normal(j).expect("coarse normals complete")) < 0.0 {
                    coarse.flip_normal(j);
                }
                forest_edges.push((i, j));
                queue.push_back(j);
            }
        }
        component += 1;
    }

    // Propagate to the full cloud.
    let full_index = SpatialIndex::build(full.points())?;
    let mut oriented = full.clone();
    for i in 0..nc {
        let ni = coarse.normal(i).expect("coarse normals complete");
        for j in full_index.radius_search(&coarse.point(i), coarse_grid_step)? {
            if let Some(nj) = oriented.normal(j) {
                if ni.dot(&nj) < 0.0 {
                    oriented.flip_normal(j);
                }
            }
        }
    }

    // Full-resolution labels from the nearest coarse point.
    let raw_full: Vec<usize> = (0..full.len())
        .into_par_iter()
        .map(|j| {
            let (nearest, _) = coarse_index.nearest(&full.point(j));
            raw_coarse_labels[nearest]
        })
        .collect();

    Ok(OrientationOutcome {
        cloud: oriented,
        labels: ComponentLabels::canonicalize(&raw_full),
        coarse,
        forest_edges,
        coarse_labels: ComponentLabels::canonicalize(&raw_coarse_labels),
        graph: OrientationGraph { edges, cutoff },
    })
}

/// Add the off-surface constraints x_j +/- L n_j with values +/-L.
///
/// An offset point is discarded (its partner kept) when its nearest
/// on-surface neighbour is not its parent and lies closer than L/2; on thin
/// double-sided sheets an unconditional offset can land on the wrong side of
/// the opposite surface and poison the fit there.
pub fn augment_offsets(cloud: &PointCloud, offset: f64) -> Result<AugmentedDataset> {
    if !(offset > 0.0) || !offset.is_finite() {
        return Err(Error::invalid(format!("offset L must be > 0, got {offset}")));
    }
    if !cloud.has_normals() {
        return Err(Error::invalid(
            "off-surface augmentation needs oriented normals on every point",
        ));
    }
    let n = cloud.len();
    let index = SpatialIndex::build(cloud.points())?;

    let mut sites: Vec<Point3<f64>> = Vec::with_capacity(3 * n);
    let mut values: Vec<f64> = Vec::with_capacity(3 * n);
    sites.extend_from_slice(cloud.points());
    values.extend(std::iter::repeat(0.0).take(n));

    let keep: Vec<(Option<Point3<f64>>, Option<Point3<f64>>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let p = cloud.point(j);
            let normal = cloud.normal(j).expect("has_normals checked");
            let side = |sign: f64| -> Option<Point3<f64>> {
                let q = p + sign * offset * normal;
                let (nearest, dist) = index.nearest(&q);
                if nearest != j && dist < offset / 2.0 {
                    None
                } else {
                    Some(q)
                }
            };
            (side(1.0), side(-1.0))
        })
        .collect();

    let mut discarded = 0usize;
    for (plus, minus) in keep {
        match plus {
            Some(q) => {
                sites.push(q);
                values.push(offset);
            }
            None => discarded += 1,
        }
        match minus {
            Some(q) => {
                sites.push(q);
                values.push(-offset);
            }
            None => discarded += 1,
        }
    }
    if discarded > 0 {
        log::info!("discarded {discarded} off-surface points too close to a foreign surface point");
    }

    let n_off = sites.len() - n;
    AugmentedDataset::new(sites, values, offset, n, n_off)
}
