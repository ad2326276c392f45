//! Regular-grid sampling of the implicit field and zero-level-set extraction
//! by marching tetrahedra.
//!
//! Each cubic cell with all eight nodes in-domain splits into six tetrahedra
//! sharing the cell's body diagonal (the Kuhn decomposition); the same
//! diagonal direction in every cell makes neighbouring cells share their face
//! diagonals, so the extracted surface is crack-free. Cells touching an
//! out-of-domain node are skipped, which is what produces open boundaries
//! near the edge of the data.

use std::collections::BTreeMap;

use nalgebra::Point3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ImplicitField;
use crate::mesh::TriangleMesh;

/// Hard cap on grid size before sampling is attempted.
pub const DEFAULT_NODE_BUDGET: usize = 200_000_000;

/// Symbolic perturbation applied to node values that are exactly zero,
/// relative to the largest in-domain magnitude.
const ZERO_PERTURBATION_REL: f64 = 1e-12;

/// Relative area floor below which an extracted triangle is dropped as
/// degenerate, in units of h^2.
const AREA_FLOOR_REL: f64 = 1e-14;

/// Crossing parameters are clamped to [T_CLAMP, 1 - T_CLAMP] so a crossing
/// that lands on a grid node (possible when a node value was perturbed away
/// from zero) still yields distinct vertices and triangles above the area
/// floor, keeping the mesh closed there.
const T_CLAMP: f64 = 1e-6;

/// Field samples on a regular grid. Out-of-domain nodes hold NaN.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    origin: Point3<f64>,
    step: f64,
    dims: [usize; 3],
    values: Vec<f64>,
}

impl SampleGrid {
    /// Wrap precomputed node values (NaN marks out-of-domain nodes).
    pub fn from_values(
        origin: Point3<f64>,
        step: f64,
        dims: [usize; 3],
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid(format!("grid step must be > 0, got {step}")));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::invalid(format!("grid dims {dims:?} must be >= 2")));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid("value count does not match grid dims"));
        }
        Ok(SampleGrid {
            origin,
            step,
            dims,
            values,
        })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    fn node_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    #[inline]
    pub fn node_position(&self, ix: usize, iy: usize, iz: usize) -> Point3<f64> {
        Point3::new(
            self.origin.x + ix as f64 * self.step,
            self.origin.y + iy as f64 * self.step,
            self.origin.z + iz as f64 * self.step,
        )
    }

    /// Node value, `None` when the node is out of domain.
    pub fn value(&self, ix: usize, iy: usize, iz: usize) -> Option<f64> {
        let v = self.values[self.node_index(ix, iy, iz)];
        v.is_finite().then_some(v)
    }

    pub fn in_domain_node_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    /// Text dump: origin, step, dims, then node values in x-fastest order.
    pub fn dump_text(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = std::io::BufWriter::new(file);
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        writeln!(w, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.z)
            .map_err(io_err)?;
        writeln!(w, "step {}", self.step).map_err(io_err)?;
        writeln!(w, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2]).map_err(io_err)?;
        for v in &self.values {
            writeln!(w, "{v}").map_err(io_err)?;
        }
        Ok(())
    }
}

/// Sample the field on a regular grid covering the augmented cloud's bounding
/// box padded by two steps, with the default node budget.
pub fn sample_grid(field: &ImplicitField, step: f64) -> Result<SampleGrid> {
    sample_grid_with_budget(field, step, DEFAULT_NODE_BUDGET)
}

pub fn sample_grid_with_budget(
    field: &ImplicitField,
    step: f64,
    node_budget: usize,
) -> Result<SampleGrid> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("grid step must be > 0, got {step}")));
    }
    let (lo, hi) = crate::cloud::bounds_of(field.mask().sites()).expect("mask is non-empty");
    let origin = Point3::new(lo.x - 2.0 * step, lo.y - 2.0 * step, lo.z - 2.0 * step);
    let mut dims = [0usize; 3];
    for axis in 0..3 {
        let span = hi[axis] + 2.0 * step - origin[axis];
        dims[axis] = ((span / step).ceil() as usize + 1).max(2);
    }
    let total = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::invalid("grid dimensions overflow"))?;
    if total > node_budget {
        return Err(Error::invalid(format!(
            "grid of {}x{}x{} = {total} nodes exceeds the budget of {node_budget}; \
             use a coarser isoGridStep",
            dims[0], dims[1], dims[2]
        )));
    }

    // nodes are independent; parallelise over z-slabs and keep layout order
    let slabs: Vec<Vec<f64>> = (0..dims[2])
        .into_par_iter()
        .map(|iz| {
            let mut slab = Vec::with_capacity(dims[0] * dims[1]);
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let p = Point3::new(
                        origin.x + ix as f64 * step,
                        origin.y + iy as f64 * step,
                        origin.z + iz as f64 * step,
                    );
                    slab.push(field.value(&p).unwrap_or(f64::NAN));
                }
            }
            slab
        })
        .collect();
    let mut values = Vec::with_capacity(total);
    for slab in slabs {
        values.extend(slab);
    }

    SampleGrid::from_values(origin, step, dims, values)
}

/// The six tetrahedra of the Kuhn decomposition, as cube-corner indices
/// (corner bit 0 = x, bit 1 = y, bit 2 = z). All share the 0-7 diagonal.
const CUBE_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Triangles crossing a single tetrahedron, as cut edges given as
/// (negative corner, positive corner) pairs. Values must be non-zero.
fn tet_triangles(values: [f64; 4]) -> Vec<[(usize, usize); 3]> {
    let neg: Vec<usize> = (0..4).filter(|&i| values[i] < 0.0).collect();
    match neg.len() {
        0 | 4 => Vec::new(),
        1 => {
            let v = neg[0];
            let others: Vec<usize> = (0..4).filter(|&i| i != v).collect();
            vec![[(v, others[0]), (v, others[1]), (v, others[2])]]
        }
        3 => {
            let v = (0..4).find(|i| !neg.contains(i)).expect("one positive");
            let others: Vec<usize> = (0..4).filter(|&i| i != v).collect();
            vec![[(others[0], v), (others[1], v), (others[2], v)]]
        }
        2 => {
            let pos: Vec<usize> = (0..4).filter(|i| !neg.contains(i)).collect();
            let quad = [
                (neg[0], pos[0]),
                (neg[0], pos[1]),
                (neg[1], pos[1]),
                (neg[1], pos[0]),
            ];
            vec![
                [quad[0], quad[1], quad[2]],
                [quad[0], quad[2], quad[3]],
            ]
        }
        _ => unreachable!(),
    }
}

type EdgeKey = (u64, u64);

/// Linear zero crossing on the edge between two nodes, computed in key order
/// so every tetrahedron sharing the edge produces bit-identical vertices.
fn edge_vertex(
    key: EdgeKey,
    positions: &dyn Fn(u64) -> Point3<f64>,
    value_of: &dyn Fn(u64) -> f64,
) -> Point3<f64> {
    let (lo, hi) = key;
    let (va, vb) = (value_of(lo), value_of(hi));
    let t = (va / (va - vb)).clamp(T_CLAMP, 1.0 - T_CLAMP);
    let (pa, pb) = (positions(lo), positions(hi));
    Point3::from(pa.coords + t * (pb.coords - pa.coords))
}

/// Extract the zero level set. Cells with any out-of-domain node are skipped;
/// the result is independent of cell visitation order (vertices are keyed by
/// their grid edge and canonically renumbered).
pub fn marching_tetrahedra(grid: &SampleGrid) -> TriangleMesh {
    marching_tetrahedra_chunked(grid, 32)
}

fn marching_tetrahedra_chunked(grid: &SampleGrid, slab_chunk: usize) -> TriangleMesh {
    let [nx, ny, nz] = grid.dims();
    let step = grid.step();

    // symbolic perturbation scale for exact zeros
    let max_abs = (0..nz)
        .into_par_iter()
        .map(|iz| {
            let mut m = 0.0f64;
            for iy in 0..ny {
                for ix in 0..nx {
                    if let Some(v) = grid.value(ix, iy, iz) {
                        m = m.max(v.abs());
                    }
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    let delta = ZERO_PERTURBATION_REL * if max_abs > 0.0 { max_abs } else { 1.0 };

    let node_id = |ix: usize, iy: usize, iz: usize| -> u64 {
        (ix + nx * (iy + ny * iz)) as u64
    };
    let decode = |id: u64| -> (usize, usize, usize) {
        let id = id as usize;
        (id % nx, (id / nx) % ny, id / (nx * ny))
    };
    let value_of = |id: u64| -> f64 {
        let (ix, iy, iz) = decode(id);
        let v = grid.value(ix, iy, iz).expect("only in-domain cells visited");
        if v == 0.0 {
            delta
        } else {
            v
        }
    };
    let position_of = |id: u64| -> Point3<f64> {
        let (ix, iy, iz) = decode(id);
        grid.node_position(ix, iy, iz)
    };

    // Collect triangles as edge-key triples, cell slabs in parallel.
    let z_chunks: Vec<(usize, usize)> = (0..nz.saturating_sub(1))
        .step_by(slab_chunk.max(1))
        .map(|z0| (z0, (z0 + slab_chunk.max(1)).min(nz - 1)))
        .collect();

    let chunk_triangles: Vec<Vec<[EdgeKey; 3]>> = z_chunks
        .par_iter()
        .map(|&(z0, z1)| {
            let mut triangles: Vec<[EdgeKey; 3]> = Vec::new();
            for iz in z0..z1 {
                for iy in 0..ny - 1 {
                    for ix in 0..nx - 1 {
                        let mut corner_ids = [0u64; 8];
                        let mut corner_vals = [0.0f64; 8];
                        let mut in_domain = true;
                        for corner in 0..8 {
                            let cx = ix + (corner & 1);
                            let cy = iy + ((corner >> 1) & 1);
                            let cz = iz + ((corner >> 2) & 1);
                            match grid.value(cx, cy, cz) {
                                Some(v) => {
                                    corner_ids[corner] = node_id(cx, cy, cz);
                                    corner_vals[corner] = if v == 0.0 { delta } else { v };
                                }
                                None => {
                                    in_domain = false;
                                    break;
                                }
                            }
                        }
                        if !in_domain {
                            continue; // open boundary at the domain edge
                        }
                        for tet in &CUBE_TETS {
                            let vals = [
                                corner_vals[tet[0]],
                                corner_vals[tet[1]],
                                corner_vals[tet[2]],
                                corner_vals[tet[3]],
                            ];
                            for tri in tet_triangles(vals) {
                                let mut keys = [(0u64, 0u64); 3];
                                for (slot, &(a, b)) in tri.iter().enumerate() {
                                    let (ga, gb) = (corner_ids[tet[a]], corner_ids[tet[b]]);
                                    keys[slot] = (ga.min(gb), ga.max(gb));
                                }
                                if keys[0] == keys[1] || keys[1] == keys[2] || keys[0] == keys[2] {
                                    continue;
                                }
                                // orient toward the positive side
                                let pos_centroid: nalgebra::Vector3<f64> = tri
                                    .iter()
                                    .map(|&(_, b)| position_of(corner_ids[tet[b]]).coords)
                                    .sum::<nalgebra::Vector3<f64>>()
                                    / 3.0;
                                let neg_centroid: nalgebra::Vector3<f64> = tri
                                    .iter()
                                    .map(|&(a, _)| position_of(corner_ids[tet[a]]).coords)
                                    .sum::<nalgebra::Vector3<f64>>()
                                    / 3.0;
                                let v0 = edge_vertex(keys[0], &position_of, &value_of);
                                let v1 = edge_vertex(keys[1], &position_of, &value_of);
                                let v2 = edge_vertex(keys[2], &position_of, &value_of);
                                let normal = (v1 - v0).cross(&(v2 - v0));
                                if normal.dot(&(pos_centroid - neg_centroid)) < 0.0 {
                                    keys.swap(1, 2);
                                }
                                triangles.push(keys);
                            }
                        }
                    }
                }
            }
            triangles
        })
        .collect();

    // Canonical vertex numbering: sorted edge keys.
    let mut vertex_ids: BTreeMap<EdgeKey, usize> = BTreeMap::new();
    for keys in chunk_triangles.iter().flatten() {
        for key in keys {
            let next = vertex_ids.len();
            vertex_ids.entry(*key).or_insert(next);
        }
    }
    let mut vertices = vec![Point3::origin(); vertex_ids.len()];
    for (key, &idx) in &vertex_ids {
        vertices[idx] = edge_vertex(*key, &position_of, &value_of);
    }

    let area_floor = AREA_FLOOR_REL * step * step;
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for keys in chunk_triangles.iter().flatten() {
        let tri = [
            vertex_ids[&keys[0]],
            vertex_ids[&keys[1]],
            vertex_ids[&keys[2]],
        ];
        let u = vertices[tri[1]] - vertices[tri[0]];
        let v = vertices[tri[2]] - vertices[tri[0]];
        if 0.5 * u.cross(&v).norm() <= area_floor {
            continue; // sliver from a near-node crossing
        }
        triangles.push(tri);
    }

    TriangleMesh::new(vertices, triangles).expect("extraction emits valid meshes")
}

/// Attach per-vertex mean curvature as the `mean_curvature` scalar channel.
/// Vertices where the gradient vanishes (or that fall outside the domain
/// between grid nodes) get a NaN marker; their count is logged.
pub fn attach_curvature(mut mesh: TriangleMesh, field: &ImplicitField) -> TriangleMesh {
    let curvature: Vec<f64> = mesh
        .vertices()
        .par_iter()
        .map(|v| field.mean_curvature(v).unwrap_or(f64::NAN))
        .collect();
    let undefined = curvature.iter().filter(|c| c.is_nan()).count();
    if undefined > 0 {
        log::warn!("mean curvature undefined at {undefined} of {} vertices", curvature.len());
    }
    mesh.set_scalar("mean_curvature", curvature)
        .expect("one value per vertex");
    mesh
}
