//! Command-line driver: reconstruct surfaces, generate synthetic clouds,
//! benchmark scaling, and dump pipeline diagnostics.
//!
//! Logs go to standard error; data goes to the requested files. Exit codes:
//! 0 success, 1 usage, 2 data error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thinsurf::config::Config;
use thinsurf::io::{load_point_cloud, save_point_cloud, CloudFormat};
use thinsurf::{Error, PointCloud};

#[derive(Parser)]
#[command(
    name = "thinsurf",
    about = "Reconstruct thin, open surfaces from noisy point clouds",
    version
)]
struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Flags mirroring the configuration file keys; any flag overrides the file.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Configuration file in key=value format.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    denoise_nbrs: Option<usize>,
    #[arg(long)]
    denoise_threshold: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    pca_nbrs: Option<usize>,
    #[arg(long)]
    coarse_grid_step: Option<f64>,
    #[arg(long)]
    graph_nbrs: Option<usize>,
    #[arg(long)]
    offset_l: Option<f64>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    expand: Option<f64>,
    #[arg(long)]
    spline_order: Option<u32>,
    #[arg(long)]
    dimension: Option<u32>,
    /// A number, or "gcv" for per-subdomain cross validation.
    #[arg(long)]
    smoothing: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iso_grid_step: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config, Error> {
        let mut config = match &self.config {
            Some(path) => Config::from_file(path)?,
            None => Config::default(),
        };
        if let Some(v) = self.denoise_nbrs {
            config.denoise_nbrs = v;
        }
        if let Some(v) = self.denoise_threshold {
            config.denoise_threshold = v;
        }
        if let Some(v) = self.grid_step {
            config.grid_step = v;
        }
        if let Some(v) = self.pca_nbrs {
            config.pca_nbrs = v;
        }
        if let Some(v) = self.coarse_grid_step {
            config.coarse_grid_step = v;
        }
        if let Some(v) = self.graph_nbrs {
            config.graph_nbrs = v;
        }
        if let Some(v) = self.offset_l {
            config.offset_l = v;
        }
        if let Some(v) = self.n_min {
            config.n_min = v;
        }
        if let Some(v) = self.n_max {
            config.n_max = v;
        }
        if let Some(v) = self.expand {
            config.expand = v;
        }
        if let Some(v) = self.spline_order {
            config.spline_order = v;
        }
        if let Some(v) = self.dimension {
            config.dimension = v;
        }
        if let Some(v) = &self.smoothing {
            config.set_key("smoothing", v).map_err(Error::Config)?;
        }
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.iso_grid_step {
            config.iso_grid_step = v;
        }
        config.validate().map_err(Error::Config)?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: point cloud in, triangle mesh out.
    Reconstruct {
        /// Input cloud (.xyz or .ply).
        #[arg(long)]
        input: PathBuf,
        /// Output mesh (.obj or .ply).
        #[arg(long)]
        output: PathBuf,
        /// Also write the report's machine-readable block to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a noisy sphere cloud.
    GenSphere {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.005)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a curled open sheet whose upper edges nearly touch.
    GenCurledSheet {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Time partitioning and fitting over a range of dataset sizes.
    Bench {
        /// Comma-separated ascending sizes, e.g. 20000,80000,320000.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Dump partition and oriented-normal diagnostics without fitting.
    Inspect {
        #[arg(long)]
        input: PathBuf,
        /// Write one "cx cy cz r count" line per subdomain.
        #[arg(long)]
        dump_partition: Option<PathBuf>,
        /// Write one "x y z nx ny nz component" line per point.
        #[arg(long)]
        dump_normals: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn load_cloud_auto(path: &PathBuf) -> Result<PointCloud, Error> {
    let format = CloudFormat::from_path(path).ok_or_else(|| {
        Error::InvalidArgument(format!("unrecognised input extension on {}", path.display()))
    })?;
    load_point_cloud(path, format)
}

fn run(cli: Cli) -> Result<(), Error> {
    // Subdomains already fit in parallel; keep the BLAS single-threaded to
    // avoid oversubscription.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Reconstruct {
            input,
            output,
            report,
            config,
        } => {
            let config = config.resolve()?;
            let summary = thinsurf::run_pipeline(&config, &input, &output)?;
            log::info!("wrote {}", output.display());
            print!("{summary}");
            println!("{}", summary.to_key_values());
            if let Some(path) = report {
                std::fs::write(&path, summary.to_key_values()).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
            }
            Ok(())
        }
        Command::GenSphere {
            n,
            radius,
            noise_sigma,
            seed,
            output,
        } => {
            let cloud = thinsurf::synth::gen_sphere(n, radius, noise_sigma, seed)?;
            let format = CloudFormat::from_path(&output).unwrap_or(CloudFormat::Xyz);
            save_point_cloud(&cloud, &output, format)?;
            log::info!("wrote {} points to {}", cloud.len(), output.display());
            Ok(())
        }
        Command::GenCurledSheet { n, seed, output } => {
            let cloud = thinsurf::synth::gen_curled_sheet(n, seed)?;
            let format = CloudFormat::from_path(&output).unwrap_or(CloudFormat::Xyz);
            save_point_cloud(&cloud, &output, format)?;
            log::info!("wrote {} points to {}", cloud.len(), output.display());
            Ok(())
        }
        Command::Bench { sizes, seed, config } => {
            let config = config.resolve()?;
            let report = thinsurf::bench::bench_scaling(&sizes, &config, seed)?;
            print!("{report}");
            Ok(())
        }
        Command::Inspect {
            input,
            dump_partition,
            dump_normals,
            config,
        } => {
            let config = config.resolve()?;
            let cloud = load_cloud_auto(&input)?;

            let cleaned = if cloud.len() > config.denoise_nbrs {
                thinsurf::preprocess::remove_outliers(
                    &cloud,
                    config.denoise_nbrs,
                    config.denoise_threshold,
                )?
                .0
            } else {
                cloud
            };
            let downsampled = thinsurf::preprocess::grid_downsample(&cleaned, config.grid_step)?;
            let with_normals =
                thinsurf::normals::ensure_normals(&downsampled, config.pca_nbrs)?;
            let orientation = thinsurf::normals::orient_normals(
                &with_normals,
                config.coarse_grid_step,
                config.graph_nbrs,
                config.pca_nbrs,
            )?;
            println!(
                "{} points after cleaning, {} components",
                orientation.cloud.len(),
                orientation.labels.component_count()
            );

            if let Some(path) = dump_normals {
                use std::io::Write;
                let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(
                    |source| Error::Io {
                        path: path.clone(),
                        source,
                    },
                )?);
                for i in 0..orientation.cloud.len() {
                    let p = orientation.cloud.point(i);
                    let n = orientation.cloud.normal(i).expect("oriented cloud has normals");
                    writeln!(
                        w,
                        "{} {} {} {} {} {} {}",
                        p.x,
                        p.y,
                        p.z,
                        n.x,
                        n.y,
                        n.z,
                        orientation.labels.label(i)
                    )
                    .map_err(|source| Error::Io {
                        path: path.clone(),
                        source,
                    })?;
                }
                log::info!("wrote oriented normals to {}", path.display());
            }

            if let Some(path) = dump_partition {
                use std::io::Write;
                let augmented =
                    thinsurf::normals::augment_offsets(&orientation.cloud, config.offset_l)?;
                let partition = thinsurf::partition::build_partition(
                    augmented.sites(),
                    config.n_min.min(augmented.len()),
                    config.n_max,
                    config.expand,
                    thinsurf::partition::WeightKind::WendlandC2,
                )?;
                let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(
                    |source| Error::Io {
                        path: path.clone(),
                        source,
                    },
                )?);
                for sub in partition.subdomains() {
                    writeln!(
                        w,
                        "{} {} {} {} {}",
                        sub.center.x,
                        sub.center.y,
                        sub.center.z,
                        sub.radius,
                        sub.member_ids.len()
                    )
                    .map_err(|source| Error::Io {
                        path: path.clone(),
                        source,
                    })?;
                }
                log::info!("wrote {} subdomains to {}", partition.len(), path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not usage errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
