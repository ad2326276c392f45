use std::time::Instant;
use thinsurf::config::{Config, Smoothing};
use thinsurf::pipeline::{extract_surface, fit_field};
use thinsurf::synth::gen_sphere;

fn main() {
    std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    let t0 = Instant::now();
    let cloud = gen_sphere(100_000, 1.0, 0.005, 505).unwrap();
    println!("gen: {:.1}s", t0.elapsed().as_secs_f64());

    let mut config = Config::default();
    config.denoise_nbrs = 50;
    config.denoise_threshold = 0.15;
    config.grid_step = 0.02;
    config.pca_nbrs = 50;
    config.coarse_grid_step = 0.08;
    config.graph_nbrs = 10;
    config.offset_l = 0.04;
    config.n_min = 600;
    config.n_max = 1500;
    config.expand = 1.1;
    config.spline_order = 3;
    config.smoothing = Smoothing::Gcv;
    config.alpha = 0.2;
    config.iso_grid_step = 0.02;

    let mut model = fit_field(&config, &cloud).unwrap();
    for (stage, secs) in &model.report.timings {
        println!("{stage}: {secs:.1}s");
    }
    println!("subdomains: {}", model.report.subdomain_count);
    println!("constraints: {}", model.report.constraint_count);
    let (lo, med, hi) = model.report.smoothing_summary.unwrap();
    println!("rho: {lo:.2e} {med:.2e} {hi:.2e}");

    let mesh = extract_surface(&mut model, config.iso_grid_step).unwrap();
    println!("extract: {:.1}s", model.report.timings.last().unwrap().1);
    println!("mesh: {} verts {} tris", mesh.vertex_count(), mesh.triangle_count());

    let mut sum_sq = 0.0;
    for v in mesh.vertices() {
        let e = v.coords.norm() - 1.0;
        sum_sq += e * e;
    }
    let rms = (sum_sq / mesh.vertex_count() as f64).sqrt();
    println!("rms radial: {rms:.5}");

    let curv = mesh.scalar("mean_curvature").unwrap();
    let good = curv.iter().filter(|k| k.is_finite() && (k.abs() - 2.0).abs() <= 0.1).count();
    println!("curvature within 5%: {:.2}%", 100.0 * good as f64 / curv.len() as f64);
    let nan = curv.iter().filter(|k| !k.is_finite()).count();
    println!("curvature NaN: {nan}");
    println!("total: {:.1}s", t0.elapsed().as_secs_f64());
}
