//! Spatial index invariants: exact agreement with a brute-force oracle at
//! scale, and a coarse sanity bound on query scaling.

use std::time::Instant;

use nalgebra::Point3;
use rand::Rng;
use thinsurf::spatial::SpatialIndex;

fn random_cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
    let mut rng = thinsurf::seeded_rng(seed);
    (0..n)
        .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
        .collect()
}

#[test]
fn thousand_queries_agree_with_brute_force() {
    let points = random_cloud(10_000, 1);
    let index = SpatialIndex::build(&points).unwrap();
    let mut rng = thinsurf::seeded_rng(2);

    for q in 0..1000 {
        let query = Point3::new(
            rng.gen::<f64>() * 1.2 - 0.1,
            rng.gen::<f64>() * 1.2 - 0.1,
            rng.gen::<f64>() * 1.2 - 0.1,
        );
        let k = rng.gen_range(1..=30);
        let got = index.knn(&query, k).unwrap();

        let mut brute: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - query).norm_squared()))
            .collect();
        brute.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        brute.truncate(k);
        let brute: Vec<(usize, f64)> = brute.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect();
        assert_eq!(got, brute, "knn mismatch on query {q}");

        let r = rng.gen::<f64>() * 0.3;
        let got_ids = index.radius_search(&query, r).unwrap();
        let brute_ids: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|(_, p)| (*p - query).norm() <= r)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(got_ids, brute_ids, "radius mismatch on query {q}");
    }
}

#[test]
fn knn_scales_sublinearly() {
    // Sanity bound: mean query time at N = 10^6 within 20x of N = 10^4.
    // A linear scan would be ~100x.
    let small = random_cloud(10_000, 3);
    let large = random_cloud(1_000_000, 4);
    let small_index = SpatialIndex::build(&small).unwrap();
    let large_index = SpatialIndex::build(&large).unwrap();

    let queries = random_cloud(2000, 5);

    // warm both paths before timing
    for q in queries.iter().take(50) {
        let _ = small_index.knn(q, 7).unwrap();
        let _ = large_index.knn(q, 7).unwrap();
    }

    let t = Instant::now();
    for q in &queries {
        std::hint::black_box(small_index.knn(q, 7).unwrap());
    }
    let small_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    for q in &queries {
        std::hint::black_box(large_index.knn(q, 7).unwrap());
    }
    let large_time = t.elapsed().as_secs_f64();

    assert!(
        large_time <= 20.0 * small_time,
        "knn at 1e6 points took {large_time:.4}s vs {small_time:.4}s at 1e4 (> 20x)"
    );
}
