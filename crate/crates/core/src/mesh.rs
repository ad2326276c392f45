//! Triangle mesh container for extracted level sets.

use std::collections::BTreeMap;

use nalgebra::Point3;

use crate::error::{Error, Result};

/// An indexed triangle mesh with optional named per-vertex scalar channels
/// (e.g. `mean_curvature`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    /// BTreeMap keeps channel order deterministic for writers.
    vertex_scalars: BTreeMap<String, Vec<f64>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            triangles,
            vertex_scalars: BTreeMap::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn empty() -> Self {
        TriangleMesh::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.vertices.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("vertex {i} is non-finite")));
            }
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= self.vertices.len()) {
                return Err(Error::invalid(format!(
                    "triangle {i} references a vertex past the end"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::invalid(format!(
                    "triangle {i} is degenerate (repeated index)"
                )));
            }
        }
        for (name, values) in &self.vertex_scalars {
            if values.len() != self.vertices.len() {
                return Err(Error::invalid(format!(
                    "scalar channel '{name}' has {} values for {} vertices",
                    values.len(),
                    self.vertices.len()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    #[inline]
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn scalar_names(&self) -> impl Iterator<Item = &str> {
        self.vertex_scalars.keys().map(|s| s.as_str())
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.vertex_scalars.get(name).map(|v| v.as_slice())
    }

    pub fn set_scalar(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.vertices.len() {
            return Err(Error::invalid(format!(
                "scalar channel '{name}' has {} values for {} vertices",
                values.len(),
                self.vertices.len()
            )));
        }
        self.vertex_scalars.insert(name.to_string(), values);
        Ok(())
    }

    pub fn triangle_centroid(&self, t: usize) -> Point3<f64> {
        let [a, b, c] = self.triangles[t];
        Point3::from(
            (self.vertices[a].coords + self.vertices[b].coords + self.vertices[c].coords) / 3.0,
        )
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let u = self.vertices[b] - self.vertices[a];
        let v = self.vertices[c] - self.vertices[a];
        0.5 * u.cross(&v).norm()
    }

    /// Count of undirected edges that do not appear in exactly two triangles.
    /// Zero for a watertight mesh.
    pub fn boundary_edge_count(&self) -> usize {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_indices() {
        let err = TriangleMesh::new(vec![Point3::origin()], vec![[0, 0, 1]]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn rejects_degenerate_triangles() {
        let verts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let err = TriangleMesh::new(verts, vec![[0, 1, 1]]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn scalars_must_match_vertex_count() {
        let verts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let mut mesh = TriangleMesh::new(verts, vec![[0, 1, 2]]).unwrap();
        assert!(mesh.set_scalar("mean_curvature", vec![0.0]).is_err());
        mesh.set_scalar("mean_curvature", vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(mesh.scalar("mean_curvature").unwrap().len(), 3);
    }

    #[test]
    fn single_triangle_has_three_boundary_edges() {
        let verts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let mesh = TriangleMesh::new(verts, vec![[0, 1, 2]]).unwrap();
        assert_eq!(mesh.boundary_edge_count(), 3);
        assert!((mesh.triangle_area(0) - 0.5).abs() < 1e-15);
    }
}
