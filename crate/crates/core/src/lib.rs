//! Reconstruction of thin, open surfaces from large, noisy point clouds.
//!
//! The pipeline fits a partition-of-unity blend of polyharmonic smoothing
//! splines to a point cloud augmented with off-surface constraints, then
//! extracts the zero level set as a triangle mesh with per-vertex mean
//! curvature. Stages: clean -> normals -> augment -> partition -> fit ->
//! extract, each usable on its own.

pub mod bench;
pub mod cloud;
pub mod config;
pub mod error;
pub mod extract;
pub mod field;
pub mod io;
pub mod mesh;
pub mod normals;
pub mod partition;
pub mod pipeline;
pub mod preprocess;
pub mod solver;
pub mod spatial;
pub mod synth;

pub use cloud::{AugmentedDataset, PointCloud};
pub use config::{Config, Smoothing};
pub use error::{Error, Result};
pub use field::ImplicitField;
pub use mesh::TriangleMesh;
pub use pipeline::{run_pipeline, PipelineReport};
pub use spatial::SpatialIndex;

/// Deterministic seedable random source used by the synthetic generators,
/// so every test and benchmark is reproducible.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha12Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha12Rng::seed_from_u64(seed)
}
