//! Property tests for structural invariants.

use proptest::prelude::*;
use setsim_core::bags::EmbeddingBag;
use setsim_core::explain::minmax_normalize;
use setsim_core::mmd::{gauss_kernel, mmd_sq, PatchKernelParams};

fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(-100.0f32..100.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Well-formed bag files survive a write/load round trip byte for byte.
    #[test]
    fn bag_roundtrip_bytes(dim in 1usize..6, n in 1usize..8, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-50.0f32..50.0) as f64).collect();
        let bag = EmbeddingBag::new("x", "p", dim, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bag");
        let p2 = dir.path().join("b.bag");
        bag.write(&p1).unwrap();
        let loaded: EmbeddingBag<f64> = EmbeddingBag::load(&p1).unwrap();
        loaded.write(&p2).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    /// The patch kernel lands in [0, 1] (0 only via underflow of huge
    /// distances), hits 1 exactly on identical inputs, and is symmetric.
    #[test]
    fn gauss_kernel_bounds(x in finite_vec(5), y in finite_vec(5), sigma in 0.1f64..50.0) {
        let xv: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let yv: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let k = gauss_kernel(&xv, &yv, sigma).unwrap();
        prop_assert!((0.0..=1.0).contains(&k));
        prop_assert_eq!(gauss_kernel(&xv, &xv, sigma).unwrap(), 1.0);
        prop_assert_eq!(k, gauss_kernel(&yv, &xv, sigma).unwrap());
    }

    /// Squared MMD is nonnegative and bitwise symmetric in its arguments.
    #[test]
    fn mmd_nonnegative_and_symmetric(
        na in 1usize..8,
        nb in 1usize..8,
        seed in any::<u64>(),
        sigma in 0.5f64..20.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = 3;
        let da: Vec<f64> = (0..na * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let db: Vec<f64> = (0..nb * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let a = EmbeddingBag::new("a", "a", dim, da).unwrap();
        let b = EmbeddingBag::new("b", "b", dim, db).unwrap();
        let params = PatchKernelParams::new(sigma).unwrap();
        let ab = mmd_sq(&a, &b, &params).unwrap();
        let ba = mmd_sq(&b, &a, &params).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
    }

    /// Min-max normalization stays in [0, 1] and is shift invariant.
    #[test]
    fn minmax_range_and_shift(values in proptest::collection::vec(-1e3f64..1e3, 1..20), shift in -10.0f64..10.0) {
        let normalized = minmax_normalize(&values).unwrap();
        prop_assert!(normalized.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let renormalized = minmax_normalize(&shifted).unwrap();
        for (a, b) in normalized.iter().zip(&renormalized) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
