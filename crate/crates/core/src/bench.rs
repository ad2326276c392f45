//! Scaling benchmark: partition build and fit time as functions of the
//! dataset size, with power-law exponents from a log-log least-squares fit.

use std::time::Instant;

use nalgebra::Point3;
use rayon::prelude::*;

use crate::config::{Config, Smoothing};
use crate::error::{Error, Result};
use crate::partition::{build_partition, WeightKind};
use crate::solver::{fit_local, LocalFrame, PhsKernel};
use crate::synth::gen_random_volume_samples;

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub n: usize,
    pub subdomains: usize,
    pub partition_seconds: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Power-law exponent of fit time vs N; `None` with fewer than 2 sizes.
    pub fit_exponent: Option<f64>,
    pub partition_exponent: Option<f64>,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:>10} {:>11} {:>14} {:>10}", "N", "subdomains", "partition(s)", "fit(s)")?;
        for row in &self.rows {
            writeln!(
                f,
                "{:>10} {:>11} {:>14.3} {:>10.3}",
                row.n, row.subdomains, row.partition_seconds, row.fit_seconds
            )?;
        }
        match (self.fit_exponent, self.partition_exponent) {
            (Some(fit), Some(part)) => {
                writeln!(f, "fit exponent: {fit:.3}")?;
                writeln!(f, "partition exponent: {part:.3}")?;
            }
            _ => writeln!(f, "exponent undefined (need at least two sizes)")?,
        }
        Ok(())
    }
}

fn power_law_exponent(ns: &[usize], times: &[f64]) -> Option<f64> {
    if ns.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|&t| t.max(1e-9).ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let var: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    (var > 0.0).then(|| cov / var)
}

/// Partition and fit random volumetric data at each size, timing the two
/// stages. The subdomain bounds come from `config` (choose them so each
/// subdomain holds on the order of 1000 sites); smoothing must be a fixed
/// value so fit timing is comparable across sizes.
pub fn bench_scaling(sizes: &[usize], config: &Config, seed: u64) -> Result<BenchReport> {
    if sizes.is_empty() {
        return Err(Error::invalid("need at least one size"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sizes must be strictly ascending"));
    }
    let rho = match config.smoothing {
        Smoothing::Fixed(rho) => rho,
        Smoothing::Gcv => {
            return Err(Error::invalid(
                "bench uses a fixed smoothing value; set smoothing to a number",
            ))
        }
    };
    let kernel = PhsKernel::new(config.spline_order, 3)?;

    let mut rows = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let (points, values) = gen_random_volume_samples(n, seed.wrapping_add(i as u64));

        let t = Instant::now();
        let partition = build_partition(
            &points,
            config.n_min,
            config.n_max,
            config.expand,
            WeightKind::WendlandC2,
        )?;
        let partition_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let fits: Vec<Result<()>> = partition
            .subdomains()
            .par_iter()
            .map(|sub| {
                let local_sites: Vec<Point3<f64>> =
                    sub.member_ids.iter().map(|&i| points[i]).collect();
                let local_values: Vec<f64> =
                    sub.member_ids.iter().map(|&i| values[i]).collect();
                let frame = LocalFrame::new(sub.center, sub.radius);
                fit_local(&local_sites, &local_values, &kernel, rho, &frame).map(|_| ())
            })
            .collect();
        for fit in fits {
            fit?;
        }
        let fit_seconds = t.elapsed().as_secs_f64();

        rows.push(BenchRow {
            n,
            subdomains: partition.len(),
            partition_seconds,
            fit_seconds,
        });
    }

    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let fit_times: Vec<f64> = rows.iter().map(|r| r.fit_seconds).collect();
    let partition_times: Vec<f64> = rows.iter().map(|r| r.partition_seconds).collect();
    Ok(BenchReport {
        fit_exponent: power_law_exponent(&ns, &fit_times),
        partition_exponent: power_law_exponent(&ns, &partition_times),
        rows,
    })
}
