//! Immutable k-d tree over 3-D points.
//!
//! Queries are exact: k-nearest-neighbour results are ordered by distance
//! with ties broken by lower point id, and radius searches use the closed
//! ball (distance <= r). A built index is read-only and safe to query from
//! many threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

use crate::error::{Error, Result};

const LEAF_BUCKET: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        dim: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3<f64>>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    id: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap ordering on (distance, id): the "worst" candidate on top.
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    /// Build over a copy of `points`. Errors on an empty slice or any
    /// non-finite coordinate.
    pub fn build(points: &[Point3<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot build a spatial index over no points"));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        let mut index = SpatialIndex {
            points: points.to_vec(),
            ids: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(points.len() / LEAF_BUCKET * 2 + 1),
            root: 0,
        };
        let n = index.ids.len();
        index.root = index.build_range(0, n);
        Ok(index)
    }

    fn build_range(&mut self, start: usize, end: usize) -> u32 {
        let len = end - start;
        if len <= LEAF_BUCKET {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }

        // Split along the axis with the largest extent.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &id in &self.ids[start..end] {
            let p = self.points[id as usize];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let mut dim = 0;
        for k in 1..3 {
            if hi[k] - lo[k] > hi[dim] - lo[dim] {
                dim = k;
            }
        }

        let mid = len / 2;
        let points = &self.points;
        self.ids[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize][dim]
                .total_cmp(&points[b as usize][dim])
                .then_with(|| a.cmp(&b))
        });
        let value = self.points[self.ids[start + mid] as usize][dim];

        let left = self.build_range(start, start + mid);
        let right = self.build_range(start + mid, end);
        self.nodes.push(Node::Split {
            dim: dim as u8,
            value,
            left,
            right,
        });
        (self.nodes.len() - 1) as u32
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
    pub fn point(&self, id: usize) -> Point3<f64> {
        self.points[id]
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// The k nearest neighbours of `query`, sorted by ascending distance with
    /// ties broken by lower point id.
    pub fn knn(&self, query: &Point3<f64>, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "k = {k} out of range 1..={}",
                self.len()
            )));
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(self.root, query, k, &mut heap);
        let mut results: Vec<Candidate> = heap.into_vec();
        results.sort_unstable();
        Ok(results
            .into_iter()
            .map(|c| (c.id as usize, c.d2.sqrt()))
            .collect())
    }

    fn knn_visit(&self, node: u32, query: &Point3<f64>, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &id in &self.ids[*start as usize..*end as usize] {
                    let d2 = (self.points[id as usize] - query).norm_squared();
                    let cand = Candidate { d2, id };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let axial = query[*dim as usize] - value;
                let (near, far) = if axial < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.knn_visit(near, query, k, heap);
                // Visit the far side on boundary ties so id tie-breaks stay exact.
                if heap.len() < k || axial * axial <= heap.peek().expect("non-empty").d2 {
                    self.knn_visit(far, query, k, heap);
                }
            }
        }
    }

    /// The single nearest neighbour.
    pub fn nearest(&self, query: &Point3<f64>) -> (usize, f64) {
        self.knn(query, 1).expect("index is non-empty")[0]
    }

    /// Ids of every point with distance <= r (closed ball), ascending.
    pub fn radius_search(&self, query: &Point3<f64>, r: f64) -> Result<Vec<usize>> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::invalid(format!("radius must be >= 0, got {r}")));
        }
        let mut out = Vec::new();
        self.radius_visit(self.root, query, r * r, &mut |id| out.push(id as usize));
        out.sort_unstable();
        Ok(out)
    }

    /// Number of points with distance <= r, without materialising the ids.
    pub fn count_within(&self, query: &Point3<f64>, r: f64) -> Result<usize> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::invalid(format!("radius must be >= 0, got {r}")));
        }
        let mut count = 0usize;
        self.radius_visit(self.root, query, r * r, &mut |_| count += 1);
        Ok(count)
    }

    fn radius_visit<F: FnMut(u32)>(&self, node: u32, query: &Point3<f64>, r2: f64, hit: &mut F) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &id in &self.ids[*start as usize..*end as usize] {
                    if (self.points[id as usize] - query).norm_squared() <= r2 {
                        hit(id);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let axial = query[*dim as usize] - value;
                if axial < 0.0 {
                    self.radius_visit(*left, query, r2, hit);
                    if axial * axial <= r2 {
                        self.radius_visit(*right, query, r2, hit);
                    }
                } else {
                    self.radius_visit(*right, query, r2, hit);
                    if axial * axial <= r2 {
                        self.radius_visit(*left, query, r2, hit);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn brute_knn(points: &[Point3<f64>], query: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - query).norm_squared()))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    fn brute_radius(points: &[Point3<f64>], query: &Point3<f64>, r: f64) -> Vec<usize> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| (*p - query).norm_squared() <= r * r)
            .map(|(i, _)| i)
            .collect()
    }

    fn random_cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = crate::seeded_rng(seed);
        (0..n)
            .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
            .collect()
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(SpatialIndex::build(&[]).is_err());
    }

    #[test]
    fn singleton_tree() {
        let index = SpatialIndex::build(&[Point3::new(1.0, 2.0, 3.0)]).unwrap();
        let hits = index.knn(&Point3::new(1.0, 2.0, 3.0), 1).unwrap();
        assert_eq!(hits, vec![(0, 0.0)]);
    }

    #[test]
    fn query_on_data_point_returns_it_first() {
        let points = random_cloud(200, 7);
        let index = SpatialIndex::build(&points).unwrap();
        let hits = index.knn(&points[13], 1).unwrap();
        assert_eq!(hits[0], (13, 0.0));
    }

    #[test]
    fn k_equals_n_returns_everything_sorted() {
        let points = random_cloud(50, 3);
        let index = SpatialIndex::build(&points).unwrap();
        let q = Point3::new(0.5, 0.5, 0.5);
        let hits = index.knn(&q, 50).unwrap();
        assert_eq!(hits.len(), 50);
        assert!(hits.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(hits, brute_knn(&points, &q, 50));
    }

    #[test]
    fn k_out_of_range_is_an_error() {
        let index = SpatialIndex::build(&random_cloud(10, 1)).unwrap();
        assert!(index.knn(&Point3::origin(), 0).is_err());
        assert!(index.knn(&Point3::origin(), 11).is_err());
    }

    #[test]
    fn duplicated_points_are_all_retrievable() {
        let p = Point3::new(0.25, 0.5, 0.75);
        let mut points = vec![p; 20];
        points.push(Point3::new(2.0, 2.0, 2.0));
        let index = SpatialIndex::build(&points).unwrap();
        let hits = index.radius_search(&p, 0.0).unwrap();
        assert_eq!(hits, (0..20).collect::<Vec<_>>());
        // Tie-break by id for identical distances.
        let knn = index.knn(&p, 5).unwrap();
        assert_eq!(
            knn.iter().map(|&(i, _)| i).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn radius_covering_everything() {
        let points = random_cloud(100, 11);
        let index = SpatialIndex::build(&points).unwrap();
        let hits = index.radius_search(&Point3::origin(), 10.0).unwrap();
        assert_eq!(hits.len(), 100);
    }

    #[test]
    fn negative_radius_is_an_error() {
        let index = SpatialIndex::build(&random_cloud(10, 2)).unwrap();
        assert!(index.radius_search(&Point3::origin(), -1.0).is_err());
    }

    #[test]
    fn knn_matches_brute_force() {
        let points = random_cloud(3000, 42);
        let index = SpatialIndex::build(&points).unwrap();
        let mut rng = crate::seeded_rng(43);
        for _ in 0..200 {
            let q = Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let k = rng.gen_range(1..=20);
            assert_eq!(index.knn(&q, k).unwrap(), brute_knn(&points, &q, k));
        }
    }

    #[test]
    fn radius_search_matches_brute_force() {
        let points = random_cloud(3000, 5);
        let index = SpatialIndex::build(&points).unwrap();
        let mut rng = crate::seeded_rng(6);
        for _ in 0..200 {
            let q = Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let r = rng.gen::<f64>() * 0.4;
            assert_eq!(index.radius_search(&q, r).unwrap(), brute_radius(&points, &q, r));
            assert_eq!(
                index.count_within(&q, r).unwrap(),
                brute_radius(&points, &q, r).len()
            );
        }
    }
}
