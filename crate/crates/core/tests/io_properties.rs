//! Property tests for the exchange formats and the configuration grammar.

use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::Rng as _;
use thinsurf::config::Config;
use thinsurf::io::{
    load_mesh, load_point_cloud, save_mesh, save_point_cloud, CloudFormat, MeshFormat,
};
use thinsurf::{PointCloud, TriangleMesh};

fn finite_coord() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1.0e6..1.0e6f64,
        -1.0..1.0f64, // cluster near the precision-sensitive range
    ]
}

fn arb_points(max: usize) -> impl Strategy<Value = Vec<Point3<f64>>> {
    prop::collection::vec(
        (finite_coord(), finite_coord(), finite_coord()).prop_map(|(x, y, z)| Point3::new(x, y, z)),
        1..max,
    )
}

fn arb_cloud() -> impl Strategy<Value = PointCloud> {
    (arb_points(40), any::<bool>(), any::<u64>()).prop_map(|(points, with_normals, seed)| {
        if with_normals {
            let mut rng = thinsurf::seeded_rng(seed);
            let normals: Vec<Vector3<f64>> = points
                .iter()
                .map(|_| {
                    loop {
                        let v = Vector3::new(
                            rng.gen::<f64>() * 2.0 - 1.0,
                            rng.gen::<f64>() * 2.0 - 1.0,
                            rng.gen::<f64>() * 2.0 - 1.0,
                        );
                        if v.norm() > 1e-3 {
                            return v.normalize();
                        }
                    }
                })
                .collect();
            PointCloud::with_normals(points, normals).unwrap()
        } else {
            PointCloud::new(points).unwrap()
        }
    })
}

fn arb_mesh() -> impl Strategy<Value = TriangleMesh> {
    (arb_points(30), any::<u64>(), any::<bool>()).prop_map(|(mut points, seed, with_scalar)| {
        // need at least 3 vertices for triangles
        while points.len() < 3 {
            points.push(Point3::new(points.len() as f64, 0.0, 0.0));
        }
        let n = points.len();
        let mut rng = thinsurf::seeded_rng(seed);
        let tri_count = rng.gen_range(0..2 * n);
        let mut triangles = Vec::new();
        for _ in 0..tri_count {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let c = rng.gen_range(0..n);
            if a != b && b != c && a != c {
                triangles.push([a, b, c]);
            }
        }
        let mut mesh = TriangleMesh::new(points, triangles).unwrap();
        if with_scalar {
            let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            mesh.set_scalar("mean_curvature", values).unwrap();
        }
        mesh
    })
}

fn tmp_path(tag: &str, ext: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("thinsurf-prop-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(format!("{tag}-{}.{ext}", std::process::id()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cloud_round_trips_exactly(cloud in arb_cloud(), ply in any::<bool>()) {
        let (format, ext) = if ply { (CloudFormat::PlyAscii, "ply") } else { (CloudFormat::Xyz, "xyz") };
        let path = tmp_path("cloud", ext);
        save_point_cloud(&cloud, &path, format).unwrap();
        let back = load_point_cloud(&path, format).unwrap();
        prop_assert_eq!(back.len(), cloud.len());
        prop_assert_eq!(back.has_normals(), cloud.has_normals());
        for i in 0..cloud.len() {
            // Rust float formatting is shortest-round-trip, so text IO is exact
            prop_assert!((back.point(i) - cloud.point(i)).norm() <= 1e-6);
            if cloud.has_normals() {
                prop_assert!((back.normal(i).unwrap() - cloud.normal(i).unwrap()).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn mesh_round_trips_exactly(mesh in arb_mesh(), ply in any::<bool>()) {
        let (format, ext) = if ply { (MeshFormat::PlyAscii, "ply") } else { (MeshFormat::Obj, "obj") };
        let path = tmp_path("mesh", ext);
        save_mesh(&mesh, &path, format).unwrap();
        let back = load_mesh(&path, format).unwrap();
        prop_assert_eq!(back.vertex_count(), mesh.vertex_count());
        prop_assert_eq!(back.triangles(), mesh.triangles());
        for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
            prop_assert!((a - b).norm() <= 1e-6);
        }
        if ply {
            // scalar channels survive the PLY round trip
            for name in mesh.scalar_names() {
                prop_assert!(back.scalar(name).is_some());
            }
        }
    }

    #[test]
    fn config_round_trips(
        grid_step in 1e-3..10.0f64,
        n_min in 1usize..3000,
        extra in 0usize..3000,
        smoothing in prop_oneof![Just(-1.0f64), 0.0..0.1f64],
        order in 2u32..5,
    ) {
        let mut config = Config::default();
        config.grid_step = grid_step;
        config.offset_l = 2.0 * grid_step;
        config.alpha = 10.0 * grid_step;
        config.n_min = n_min;
        config.n_max = n_min + extra;
        config.spline_order = order;
        config.smoothing = if smoothing < 0.0 {
            thinsurf::Smoothing::Gcv
        } else {
            thinsurf::Smoothing::Fixed(smoothing)
        };
        config.validate().unwrap();
        let text = config.to_key_values();
        let parsed = Config::from_key_values(&text).unwrap();
        prop_assert_eq!(parsed, config);
    }
}
