//! Quick throughput probe: full pairwise matrix over synthetic bags.
//! Usage: bench_pairwise [bags] [patches] [dims] [threads]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use setsim_core::bags::EmbeddingBag;
use setsim_core::mmd::{pairwise_distances, PatchKernelParams, DEFAULT_TILE};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let n_bags = args.first().copied().unwrap_or(50);
    let patches = args.get(1).copied().unwrap_or(500);
    let dims = args.get(2).copied().unwrap_or(64);
    let threads = args.get(3).copied().unwrap_or(8);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bags: Vec<EmbeddingBag<f64>> = (0..n_bags)
        .map(|i| {
            let data: Vec<f64> = (0..patches * dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
            EmbeddingBag::new(format!("b{i}"), format!("P{i}"), dims, data).unwrap()
        })
        .collect();

    let params = PatchKernelParams::new(10.0).unwrap();
    let start = std::time::Instant::now();
    let d = pairwise_distances(&bags, &params, DEFAULT_TILE, threads).unwrap();
    let elapsed = start.elapsed();
    println!(
        "{n_bags} bags x {patches} patches x {dims} dims, {threads} threads: {:.2?} (checksum {:.6})",
        elapsed,
        d.get(0, n_bags - 1)
    );
}
