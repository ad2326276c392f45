//! End-to-end pipeline behaviour: determinism, report reconciliation, and
//! stage-tagged failure.

use thinsurf::config::{Config, Smoothing};
use thinsurf::io::{save_point_cloud, CloudFormat};
use thinsurf::synth::gen_sphere;
use thinsurf::{run_pipeline, Error};

fn sphere_config() -> Config {
    let mut config = Config::default();
    config.denoise_nbrs = 30;
    config.denoise_threshold = 3.0;
    config.grid_step = 0.05;
    config.pca_nbrs = 30;
    config.coarse_grid_step = 0.2;
    config.graph_nbrs = 10;
    config.offset_l = 0.1;
    config.n_min = 300;
    config.n_max = 900;
    config.expand = 1.1;
    config.spline_order = 3;
    config.smoothing = Smoothing::Fixed(1e-4);
    config.alpha = 0.5;
    config.iso_grid_step = 0.06;
    config
}

fn workdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("thinsurf-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn identical_inputs_give_byte_identical_meshes() {
    let dir = workdir();
    let input = dir.join("sphere.xyz");
    let cloud = gen_sphere(12_000, 1.0, 0.004, 99).unwrap();
    save_point_cloud(&cloud, &input, CloudFormat::Xyz).unwrap();

    let config = sphere_config();
    let out_a = dir.join("a.obj");
    let out_b = dir.join("b.obj");
    let report_a = run_pipeline(&config, &input, &out_a).unwrap();
    let report_b = run_pipeline(&config, &input, &out_b).unwrap();

    let bytes_a = std::fs::read(&out_a).unwrap();
    let bytes_b = std::fs::read(&out_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "pipeline output must be deterministic");
    assert_eq!(report_a.mesh_vertices, report_b.mesh_vertices);
    assert_eq!(report_a.mesh_triangles, report_b.mesh_triangles);
}

#[test]
fn report_counts_reconcile() {
    let dir = workdir();
    let input = dir.join("sphere2.xyz");
    let cloud = gen_sphere(9_000, 1.0, 0.004, 100).unwrap();
    save_point_cloud(&cloud, &input, CloudFormat::Xyz).unwrap();

    let config = sphere_config();
    let output = dir.join("out.ply");
    let report = run_pipeline(&config, &input, &output).unwrap();

    assert_eq!(report.input_points, 9_000);
    assert_eq!(
        report.post_outlier_points,
        report.input_points - report.outliers_removed
    );
    assert_eq!(
        report.oriented_points,
        report.post_downsample_points - report.dropped_normal_less
    );
    assert_eq!(
        report.constraint_count,
        3 * report.oriented_points - report.discarded_offsets
    );
    assert!(report.subdomain_count > 0);
    assert!(report.mesh_vertices > 0);
    assert!(report.mesh_triangles > 0);
    let stage_names: Vec<&str> = report.timings.iter().map(|(s, _)| *s).collect();
    assert_eq!(
        stage_names,
        vec!["load", "clean", "normals", "augment", "partition", "fit", "mask", "extract", "save"]
    );

    // the machine block parses as key=value lines
    let block = report.to_key_values();
    for line in block.lines() {
        assert!(line.contains('='), "bad report line: {line}");
    }
    assert!(block.contains(&format!("inputPoints={}", report.input_points)));
}

#[test]
fn gcv_varies_across_subdomains() {
    let dir = workdir();
    let input = dir.join("sphere3.xyz");
    // spatially varying noise so per-subdomain smoothing differs
    let cloud = gen_sphere(10_000, 1.0, 0.006, 101).unwrap();
    save_point_cloud(&cloud, &input, CloudFormat::Xyz).unwrap();

    let mut config = sphere_config();
    config.smoothing = Smoothing::Gcv;
    let output = dir.join("gcv.obj");
    let report = run_pipeline(&config, &input, &output).unwrap();
    let (lo, _, hi) = report.smoothing_summary.expect("smoothing summary");
    assert!(lo < hi, "expected subdomain variation, got {lo} .. {hi}");
}

#[test]
fn missing_input_is_a_stage_tagged_error() {
    let config = sphere_config();
    let err = run_pipeline(
        &config,
        std::path::Path::new("/nonexistent/cloud.xyz"),
        std::path::Path::new("/tmp/never.obj"),
    )
    .unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(*stage, "load"),
        other => panic!("expected stage-tagged error, got {other}"),
    }
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn numerical_errors_exit_with_code_three() {
    let err = Error::Numerical("test".into());
    assert_eq!(err.exit_code(), 3);
    let wrapped = Error::Stage {
        stage: "fit",
        source: Box::new(Error::Numerical("inner".into())),
    };
    assert_eq!(wrapped.exit_code(), 3);
}
