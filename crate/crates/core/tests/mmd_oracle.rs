//! Independent-oracle checks for the MMD engine: naive double sums, metric
//! behavior under mean shifts, and the Mercer property of the transform.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use setsim_core::bags::EmbeddingBag;
use setsim_core::mmd::{
    check_psd, mmd_sq, median_gamma, pairwise_distances, to_kernel, PatchKernelParams, DEFAULT_TILE,
};

fn random_bag(rng: &mut ChaCha8Rng, id: &str, n: usize, dim: usize, shift: f64) -> EmbeddingBag<f64> {
    let data: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0) + shift).collect();
    EmbeddingBag::new(id, id, dim, data).unwrap()
}

/// Naive oracle: direct double sums over explicit kernel evaluations.
fn naive_mmd(a: &EmbeddingBag<f64>, b: &EmbeddingBag<f64>, sigma: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| {
        let sq: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
        (-sq / (4.0 * sigma * sigma)).exp()
    };
    let double_sum = |p: &EmbeddingBag<f64>, q: &EmbeddingBag<f64>| {
        let mut s = 0.0;
        for x in p.rows() {
            for y in q.rows() {
                s += k(x, y);
            }
        }
        s
    };
    let na = a.len() as f64;
    let nb = b.len() as f64;
    double_sum(a, a) / (na * na) + double_sum(b, b) / (nb * nb) - 2.0 * double_sum(a, b) / (na * nb)
}

#[test]
fn random_pairs_match_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for trial in 0..30 {
        let dim = rng.gen_range(1..=16);
        let n = rng.gen_range(1..=50);
        let m = rng.gen_range(1..=50);
        let shift = rng.gen_range(0.0..2.0);
        let a = random_bag(&mut rng, "a", n, dim, 0.0);
        let b = random_bag(&mut rng, "b", m, dim, shift);
        for sigma in [0.5, 2.0, 10.0] {
            let params = PatchKernelParams::new(sigma).unwrap();
            let ours = mmd_sq(&a, &b, &params).unwrap();
            let oracle = naive_mmd(&a, &b, sigma);
            let rel = (ours - oracle).abs() / oracle.abs().max(1e-30);
            assert!(rel < 1e-10, "trial {trial} sigma {sigma}: {ours} vs {oracle} (rel {rel:e})");
        }
    }
}

#[test]
fn mean_shift_grid_is_monotone_across_seeds() {
    let shifts = [0.0, 0.5, 1.0, 2.0, 4.0];
    let params = PatchKernelParams::<f64>::default();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let reference = random_bag(&mut rng, "ref", 100, 8, 0.0);
        let base = random_bag(&mut rng, "base", 100, 8, 0.0);
        let mut previous = -1.0;
        for &shift in &shifts {
            let data: Vec<f64> = base
                .rows()
                .flat_map(|r| {
                    let mut v = r.to_vec();
                    v[0] += shift;
                    v
                })
                .collect();
            let shifted = EmbeddingBag::new("shifted", "shifted", 8, data).unwrap();
            let value = mmd_sq(&reference, &shifted, &params).unwrap();
            assert!(value > previous, "seed {seed} shift {shift}: {value} <= {previous}");
            previous = value;
        }
    }
}

#[test]
fn transformed_kernels_pass_the_psd_check() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let n_bags = 30;
        let bags: Vec<EmbeddingBag<f64>> = (0..n_bags)
            .map(|i| {
                let n = rng.gen_range(5..25);
                let shift = rng.gen_range(-1.0..1.0);
                random_bag(&mut rng, &format!("b{i}"), n, 6, shift)
            })
            .collect();
        let params = PatchKernelParams::new(2.0).unwrap();
        let d = pairwise_distances(&bags, &params, DEFAULT_TILE, 4).unwrap();
        let gamma = median_gamma(&d);
        let k = to_kernel(&d, gamma).unwrap();
        let tol = 1e-8 * n_bags as f64;
        let report = check_psd(&k, tol).unwrap();
        assert!(report.pass, "seed {seed}: min eigenvalue {} < -{tol}", report.min_eigenvalue);
    }
}

#[test]
fn downdating_matches_physical_removal() {
    use setsim_core::mmd::{cross_sums, mmd_downdated, PreparedBag};
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for _ in 0..5 {
        let n = rng.gen_range(4..20);
        let m = rng.gen_range(3..15);
        let query = random_bag(&mut rng, "q", n, 5, 0.0);
        let train = random_bag(&mut rng, "t", m, 5, 0.6);
        let params = PatchKernelParams::new(3.0).unwrap();
        let pq = PreparedBag::prepare(&query, &params, DEFAULT_TILE);
        let pt = PreparedBag::prepare(&train, &params, DEFAULT_TILE);
        let cross = cross_sums(&pq, &pt, &params, DEFAULT_TILE);
        for _ in 0..5 {
            let j = rng.gen_range(0..n);
            let fast = mmd_downdated(&pq, j, pt.self_total(), pt.len(), &cross).unwrap();
            let slow = mmd_sq(&query.without_row(j).unwrap(), &train, &params).unwrap();
            assert!((fast - slow).abs() < 1e-9, "row {j}: {fast} vs {slow}");
        }
    }
}
