//! End-to-end orchestration: clean -> normals -> augment -> partition ->
//! fit -> extract, with stage timing and a reconciling report.

use std::path::Path;
use std::time::Instant;

use nalgebra::Point3;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::config::{Config, Smoothing};
use crate::error::{Error, Result};
use crate::extract::{attach_curvature, marching_tetrahedra, sample_grid};
use crate::field::{build_domain_mask, ImplicitField};
use crate::io::{load_point_cloud, save_mesh, CloudFormat, MeshFormat};
use crate::mesh::TriangleMesh;
use crate::normals::{augment_offsets, ensure_normals, orient_normals};
use crate::partition::{build_partition, WeightKind};
use crate::preprocess::{grid_downsample, remove_outliers};
use crate::solver::{fit_local, gcv_minimize, LocalFrame, PhsKernel, GCV_RHO_HI, GCV_RHO_LO};

/// Fallback smoothing when per-subdomain GCV cannot run (e.g. rank-deficient
/// polynomial block on a degenerate subdomain).
const GCV_FALLBACK_RHO: f64 = 1e-3;

/// Counts and timings for one pipeline run. Counts reconcile:
/// `post_outlier_points = input_points - outliers_removed` and
/// `constraint_count = 3 * oriented_points - discarded_offsets`.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub config: Config,
    pub input_points: usize,
    pub outliers_removed: usize,
    pub post_outlier_points: usize,
    pub post_downsample_points: usize,
    /// Points dropped because no normal could be estimated for them.
    pub dropped_normal_less: usize,
    /// Points that entered augmentation (post-downsample minus dropped).
    pub oriented_points: usize,
    pub component_count: usize,
    pub constraint_count: usize,
    pub discarded_offsets: usize,
    pub subdomain_count: usize,
    /// (min, median, max) of the per-subdomain smoothing parameters.
    pub smoothing_summary: Option<(f64, f64, f64)>,
    pub mesh_vertices: usize,
    pub mesh_triangles: usize,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(&'static str, f64)>,
}

impl PipelineReport {
    fn new(config: Config) -> Self {
        PipelineReport {
            config,
            input_points: 0,
            outliers_removed: 0,
            post_outlier_points: 0,
            post_downsample_points: 0,
            dropped_normal_less: 0,
            oriented_points: 0,
            component_count: 0,
            constraint_count: 0,
            discarded_offsets: 0,
            subdomain_count: 0,
            smoothing_summary: None,
            mesh_vertices: 0,
            mesh_triangles: 0,
            timings: Vec::new(),
        }
    }

    /// Machine-readable `key=value` block.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("inputPoints", self.input_points.to_string());
        push("outliersRemoved", self.outliers_removed.to_string());
        push("postOutlierPoints", self.post_outlier_points.to_string());
        push("postDownsamplePoints", self.post_downsample_points.to_string());
        push("droppedNormalLess", self.dropped_normal_less.to_string());
        push("orientedPoints", self.oriented_points.to_string());
        push("componentCount", self.component_count.to_string());
        push("constraintCount", self.constraint_count.to_string());
        push("discardedOffsets", self.discarded_offsets.to_string());
        push("subdomainCount", self.subdomain_count.to_string());
        if let Some((lo, med, hi)) = self.smoothing_summary {
            push("smoothingMin", lo.to_string());
            push("smoothingMedian", med.to_string());
            push("smoothingMax", hi.to_string());
        }
        push("meshVertices", self.mesh_vertices.to_string());
        push("meshTriangles", self.mesh_triangles.to_string());
        for (stage, secs) in &self.timings {
            push(&format!("seconds.{stage}"), format!("{secs:.3}"));
        }
        out
    }
}

impl std::fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pipeline report")?;
        writeln!(
            f,
            "  points: {} in, {} outliers removed, {} after downsampling",
            self.input_points, self.outliers_removed, self.post_downsample_points
        )?;
        if self.dropped_normal_less > 0 {
            writeln!(f, "  dropped {} normal-less points", self.dropped_normal_less)?;
        }
        writeln!(
            f,
            "  constraints: {} ({} offsets discarded), components: {}",
            self.constraint_count, self.discarded_offsets, self.component_count
        )?;
        writeln!(f, "  subdomains: {}", self.subdomain_count)?;
        if let Some((lo, med, hi)) = self.smoothing_summary {
            writeln!(f, "  smoothing rho: min {lo:.3e}, median {med:.3e}, max {hi:.3e}")?;
        }
        writeln!(
            f,
            "  mesh: {} vertices, {} triangles",
            self.mesh_vertices, self.mesh_triangles
        )?;
        for (stage, secs) in &self.timings {
            writeln!(f, "  {stage}: {secs:.3} s")?;
        }
        Ok(())
    }
}

/// A fitted field plus the bookkeeping accumulated while producing it.
pub struct FittedModel {
    pub field: ImplicitField,
    pub report: PipelineReport,
}

/// Run the fitting stages (everything up to isosurface extraction).
pub fn fit_field(config: &Config, cloud: &PointCloud) -> Result<FittedModel> {
    config.validate().map_err(Error::from).map_err(Error::in_stage("config"))?;
    for note in config.advisories() {
        log::warn!("{note}");
    }
    if config.dimension != 3 {
        return Err(Error::Stage {
            stage: "config",
            source: Box::new(Error::invalid("the pipeline operates in dimension 3")),
        });
    }

    let mut report = PipelineReport::new(config.clone());
    report.input_points = cloud.len();

    // clean: outlier rejection then grid-average downsampling
    let t = Instant::now();
    let cleaned = if cloud.len() > 2 {
        let k = config.denoise_nbrs.min(cloud.len() - 1);
        if k < config.denoise_nbrs {
            log::warn!(
                "denoiseNbrs clamped from {} to {k} for a {}-point cloud",
                config.denoise_nbrs,
                cloud.len()
            );
        }
        let (kept, outliers) = remove_outliers(cloud, k, config.denoise_threshold)
            .map_err(Error::in_stage("clean"))?;
        report.outliers_removed = outliers.removed_ids.len();
        kept
    } else {
        cloud.clone()
    };
    report.post_outlier_points = cleaned.len();
    let downsampled =
        grid_downsample(&cleaned, config.grid_step).map_err(Error::in_stage("clean"))?;
    report.post_downsample_points = downsampled.len();
    report.timings.push(("clean", t.elapsed().as_secs_f64()));

    // normals: estimate missing, drop hopeless, orient
    let t = Instant::now();
    let with_normals =
        ensure_normals(&downsampled, config.pca_nbrs).map_err(Error::in_stage("normals"))?;
    let missing = with_normals.missing_normal_ids();
    report.dropped_normal_less = missing.len();
    let usable = if missing.is_empty() {
        with_normals
    } else {
        log::warn!("dropping {} points with no estimable normal", missing.len());
        let keep: Vec<usize> =
            (0..with_normals.len()).filter(|i| !missing.contains(i)).collect();
        with_normals.select(&keep)
    };
    let orientation = orient_normals(
        &usable,
        config.coarse_grid_step,
        config.graph_nbrs,
        config.pca_nbrs,
    )
    .map_err(Error::in_stage("normals"))?;
    report.oriented_points = orientation.cloud.len();
    report.component_count = orientation.labels.component_count();
    report.timings.push(("normals", t.elapsed().as_secs_f64()));

    // augment
    let t = Instant::now();
    let augmented = augment_offsets(&orientation.cloud, config.offset_l)
        .map_err(Error::in_stage("augment"))?;
    report.constraint_count = augmented.len();
    report.discarded_offsets = 3 * report.oriented_points - augmented.len();
    report.timings.push(("augment", t.elapsed().as_secs_f64()));

    // partition
    let t = Instant::now();
    let mut partition = build_partition(
        augmented.sites(),
        config.n_min.min(augmented.len()),
        config.n_max,
        config.expand,
        WeightKind::WendlandC2,
    )
    .map_err(Error::in_stage("partition"))?;
    report.subdomain_count = partition.len();
    report.timings.push(("partition", t.elapsed().as_secs_f64()));

    // fit, subdomains in parallel
    let t = Instant::now();
    let kernel = PhsKernel::new(config.spline_order, config.dimension)
        .map_err(Error::in_stage("fit"))?;
    let sites = augmented.sites();
    let values = augmented.values();
    let fits: Vec<Result<(crate::solver::LocalSpline, f64)>> = partition
        .subdomains()
        .par_iter()
        .enumerate()
        .map(|(id, sub)| {
            let local_sites: Vec<Point3<f64>> =
                sub.member_ids.iter().map(|&i| sites[i]).collect();
            let local_values: Vec<f64> = sub.member_ids.iter().map(|&i| values[i]).collect();
            let frame = LocalFrame::new(sub.center, sub.radius);
            let rho = match config.smoothing {
                Smoothing::Fixed(rho) => rho,
                Smoothing::Gcv => {
                    let scaled: Vec<Point3<f64>> =
                        local_sites.iter().map(|p| frame.to_local(p)).collect();
                    match gcv_minimize(&scaled, &local_values, &kernel, GCV_RHO_LO, GCV_RHO_HI) {
                        Ok(rho) => rho,
                        Err(e) => {
                            log::warn!(
                                "subdomain {id}: GCV failed ({e}); using rho = {GCV_FALLBACK_RHO}"
                            );
                            GCV_FALLBACK_RHO
                        }
                    }
                }
            };
            let mut spline = fit_local(&local_sites, &local_values, &kernel, rho, &frame)
                .map_err(|e| Error::numerical(format!("subdomain {id}: {e}")))?;
            spline.subdomain_id = id;
            Ok((spline, rho))
        })
        .collect();
    let mut splines = Vec::with_capacity(fits.len());
    let mut rhos = Vec::with_capacity(fits.len());
    for fit in fits {
        let (spline, rho) = fit.map_err(Error::in_stage("fit"))?;
        splines.push(spline);
        rhos.push(rho);
    }
    for (sub, &rho) in partition.subdomains_mut().iter_mut().zip(&rhos) {
        sub.smoothing = Some(rho);
    }
    let mut sorted = rhos.clone();
    sorted.sort_by(f64::total_cmp);
    report.smoothing_summary = (!sorted.is_empty()).then(|| {
        (
            sorted[0],
            sorted[sorted.len() / 2],
            sorted[sorted.len() - 1],
        )
    });
    report.timings.push(("fit", t.elapsed().as_secs_f64()));

    // evaluation-domain mask
    let t = Instant::now();
    let mask = build_domain_mask(&augmented, config.alpha).map_err(Error::in_stage("mask"))?;
    report.timings.push(("mask", t.elapsed().as_secs_f64()));

    let field = ImplicitField::new(partition, splines, mask).map_err(Error::in_stage("fit"))?;
    Ok(FittedModel { field, report })
}

/// Extract the zero level set of a fitted field with per-vertex curvature.
pub fn extract_surface(model: &mut FittedModel, step: f64) -> Result<TriangleMesh> {
    let t = Instant::now();
    let grid = sample_grid(&model.field, step).map_err(Error::in_stage("extract"))?;
    let mesh = marching_tetrahedra(&grid);
    let mesh = attach_curvature(mesh, &model.field);
    model.report.mesh_vertices = mesh.vertex_count();
    model.report.mesh_triangles = mesh.triangle_count();
    model.report.timings.push(("extract", t.elapsed().as_secs_f64()));
    Ok(mesh)
}

/// Full run: load a cloud, fit, extract, write the mesh, return the report.
pub fn run_pipeline(config: &Config, input: &Path, output: &Path) -> Result<PipelineReport> {
    let t = Instant::now();
    let format = CloudFormat::from_path(input).ok_or_else(|| Error::Stage {
        stage: "load",
        source: Box::new(Error::invalid(format!(
            "unrecognised input extension on {}",
            input.display()
        ))),
    })?;
    let cloud = load_point_cloud(input, format).map_err(Error::in_stage("load"))?;
    let load_seconds = t.elapsed().as_secs_f64();

    let mut model = fit_field(config, &cloud)?;
    model.report.timings.insert(0, ("load", load_seconds));
    let mesh = extract_surface(&mut model, config.iso_grid_step)?;

    let t = Instant::now();
    let mesh_format = MeshFormat::from_path(output).ok_or_else(|| Error::Stage {
        stage: "save",
        source: Box::new(Error::invalid(format!(
            "unrecognised output extension on {}",
            output.display()
        ))),
    })?;
    save_mesh(&mesh, output, mesh_format).map_err(Error::in_stage("save"))?;
    model.report.timings.push(("save", t.elapsed().as_secs_f64()));

    Ok(model.report)
}
