//! Perturbation-based per-patch sensitivity and k-medoid representatives.
//!
//! The sensitivity of patch `j` in a query bag is the change in a trained
//! model's score when the patch is removed: `delta_j = f(bag minus j) - f(bag)`.
//! Removal never refits anything; the kernel row against the training bags
//! is recomputed through incremental downdates of cached double-sums, which
//! equal the from-scratch recomputation to within round-off.

use crate::bags::EmbeddingBag;
use crate::error::{Error, Result};
use crate::machines::DualModel;
use crate::matrix::KernelFingerprint;
use crate::mmd::{cross_sums, mmd_downdated, mmd_from_sums, CrossSums, PatchKernelParams, PreparedBag, ESTIMATOR_BIASED};
use crate::scalar::Real;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Number of representative patches selected per risk group.
pub const DEFAULT_MEDOIDS: usize = 25;

/// Per-patch sensitivity scores for one bag under a fixed model.
#[derive(Debug, Clone)]
pub struct SensitivityMap<F> {
    pub bag_id: String,
    /// Model score on the intact bag.
    pub baseline: F,
    /// `delta_j = f(bag minus patch j) - baseline`.
    pub deltas: Vec<F>,
    /// Min-max rescaled deltas; all 0.5 when the deltas are constant.
    pub normalized: Vec<F>,
}

/// Min-max rescaling to `[0, 1]`; a constant input maps to all 0.5.
pub fn minmax_normalize<F: Real>(values: &[F]) -> Result<Vec<F>> {
    if values.is_empty() {
        return Err(Error::validation("cannot normalize an empty slice"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("cannot normalize non-finite values"));
    }
    let min = values.iter().cloned().fold(F::infinity(), F::min);
    let max = values.iter().cloned().fold(F::neg_infinity(), F::max);
    if min == max {
        return Ok(vec![F::from_f64_lossy(0.5); values.len()]);
    }
    let range = max - min;
    Ok(values.iter().map(|&v| (v - min) / range).collect())
}

/// Caches for explaining many queries against one trained model: the
/// training bags are prepared once and shared read-only. The engine owns
/// its thread pool; per-patch downdates are independent and parallel.
pub struct SensitivityEngine<'a, F: Real> {
    model: &'a DualModel<F>,
    train: Vec<PreparedBag<'a, F>>,
    params: PatchKernelParams<F>,
    gamma: F,
    tile: usize,
    pool: rayon::ThreadPool,
}

impl<'a, F: Real> SensitivityEngine<'a, F> {
    /// Builds the engine, checking that the supplied kernel parameters match
    /// the fingerprint the model was trained against and that `train_bags`
    /// align with the model's training ids.
    pub fn new(
        model: &'a DualModel<F>,
        train_bags: &'a [EmbeddingBag<F>],
        params: PatchKernelParams<F>,
        gamma: F,
        tile: usize,
        threads: usize,
    ) -> Result<Self> {
        let fingerprint = KernelFingerprint {
            sigma: Some(params.sigma().as_f64()),
            gamma: Some(gamma.as_f64()),
            estimator: Some(ESTIMATOR_BIASED.to_string()),
        };
        model.check_kernel(&fingerprint)?;
        if train_bags.len() != model.train_ids.len() {
            return Err(Error::validation(format!(
                "{} training bags supplied for a model with {} training ids",
                train_bags.len(),
                model.train_ids.len()
            )));
        }
        for (bag, id) in train_bags.iter().zip(&model.train_ids) {
            if &bag.id != id {
                return Err(Error::validation(format!(
                    "training bag order mismatch: expected '{id}', got '{}'",
                    bag.id
                )));
            }
        }
        if threads == 0 {
            return Err(Error::validation("thread count must be >= 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::validation(format!("cannot build thread pool: {e}")))?;
        let train: Vec<PreparedBag<'a, F>> = pool.install(|| {
            train_bags.par_iter().map(|b| PreparedBag::prepare(b, &params, tile)).collect()
        });
        Ok(SensitivityEngine { model, train, params, gamma, tile, pool })
    }

    fn score(&self, kernel_row: &[F]) -> F {
        let mut s = self.model.bias.unwrap_or_else(F::zero);
        for (c, k) in self.model.coefficients.iter().zip(kernel_row) {
            s = s + *c * *k;
        }
        s
    }

    /// Leave-one-patch-out sensitivity for one query bag of size >= 2.
    pub fn explain(&self, query: &EmbeddingBag<F>) -> Result<SensitivityMap<F>> {
        if query.len() < 2 {
            return Err(Error::validation("sensitivity needs a bag of at least 2 patches"));
        }
        self.pool.install(|| {
            let prepared = PreparedBag::prepare(query, &self.params, self.tile);
            let crosses: Vec<CrossSums<F>> = self
                .train
                .par_iter()
                .map(|t| cross_sums(&prepared, t, &self.params, self.tile))
                .collect();

            let mut base_row = Vec::with_capacity(self.train.len());
            for (t, cross) in self.train.iter().zip(&crosses) {
                let d = mmd_from_sums(prepared.self_total(), prepared.len(), t.self_total(), t.len(), cross.total)?;
                base_row.push((-self.gamma * d).exp());
            }
            let baseline = self.score(&base_row);

            let deltas: Result<Vec<F>> = (0..query.len())
                .into_par_iter()
                .map(|j| {
                    let mut row = Vec::with_capacity(self.train.len());
                    for (t, cross) in self.train.iter().zip(&crosses) {
                        let d = mmd_downdated(&prepared, j, t.self_total(), t.len(), cross)?;
                        row.push((-self.gamma * d).exp());
                    }
                    Ok(self.score(&row) - baseline)
                })
                .collect();
            let deltas = deltas?;
            let normalized = minmax_normalize(&deltas)?;
            Ok(SensitivityMap { bag_id: query.id.clone(), baseline, deltas, normalized })
        })
    }
}

/// A candidate patch for medoid selection.
#[derive(Debug, Clone)]
pub struct Candidate<F> {
    /// Patch identity, e.g. `bag_id:patch_index`.
    pub id: String,
    pub patient_id: String,
    /// Sensitivity score the patch was selected by.
    pub score: F,
    pub vector: Vec<F>,
}

/// Which per-patient extreme to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremeMode {
    Highest,
    Lowest,
}

/// Keeps one candidate per patient: the highest- or lowest-scoring patch,
/// with exact score draws broken by a seeded random choice.
pub fn select_extreme_per_patient<F: Real>(
    candidates: &[Candidate<F>],
    mode: ExtremeMode,
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patients: Vec<&str> = Vec::new();
    for c in candidates {
        if !patients.contains(&c.patient_id.as_str()) {
            patients.push(&c.patient_id);
        }
    }
    let mut selected = Vec::with_capacity(patients.len());
    for patient in patients {
        let members: Vec<usize> = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.patient_id == patient)
            .map(|(i, _)| i)
            .collect();
        let best_score = members
            .iter()
            .map(|&i| candidates[i].score)
            .fold(
                match mode {
                    ExtremeMode::Highest => F::neg_infinity(),
                    ExtremeMode::Lowest => F::infinity(),
                },
                |acc, s| match mode {
                    ExtremeMode::Highest => acc.max(s),
                    ExtremeMode::Lowest => acc.min(s),
                },
            );
        let tied: Vec<usize> = members.into_iter().filter(|&i| candidates[i].score == best_score).collect();
        selected.push(*tied.choose(&mut rng).expect("patient has candidates"));
    }
    selected
}

fn euclidean<F: Real>(a: &[F], b: &[F]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).as_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// PAM k-medoids under Euclidean distance: deterministic greedy BUILD, then
/// best-improvement SWAP to a local optimum. Returns medoid indices into
/// `candidates`, sorted ascending.
pub fn representative_patches<F: Real>(candidates: &[Candidate<F>], k: usize) -> Result<Vec<usize>> {
    let n = candidates.len();
    if k == 0 {
        return Err(Error::validation("k must be >= 1"));
    }
    if n < k {
        return Err(Error::validation(format!("{n} candidates cannot yield {k} medoids")));
    }
    if k == n {
        return Ok((0..n).collect());
    }
    let dist: Vec<f64> = {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = euclidean(&candidates[i].vector, &candidates[j].vector);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    };
    let cost_of = |medoids: &[usize]| -> f64 {
        (0..n)
            .map(|i| medoids.iter().map(|&m| dist[i * n + m]).fold(f64::INFINITY, f64::min))
            .sum()
    };

    // BUILD: start from the 1-medoid optimum, then greedily add the point
    // with the largest cost reduction; ties break toward smaller indices.
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let first = (0..n)
        .map(|c| ((0..n).map(|i| dist[i * n + c]).sum::<f64>(), c))
        .min_by(|a, b| a.partial_cmp(b).unwrap())
        .unwrap()
        .1;
    medoids.push(first);
    while medoids.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let mut trial = medoids.clone();
            trial.push(c);
            let cost = cost_of(&trial);
            if best.map_or(true, |(bc, bi)| cost < bc || (cost == bc && c < bi)) {
                best = Some((cost, c));
            }
        }
        medoids.push(best.unwrap().1);
    }

    // SWAP: apply the best strictly improving (medoid, candidate) exchange
    // until none remains.
    let mut cost = cost_of(&medoids);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (mi, &m) in medoids.iter().enumerate() {
            for c in 0..n {
                if medoids.contains(&c) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[mi] = c;
                let trial_cost = cost_of(&trial);
                if trial_cost < cost - 1e-12
                    && best.map_or(true, |(bc, bm, bcand)| {
                        trial_cost < bc || (trial_cost == bc && (m, c) < (medoids[bm], bcand))
                    })
                {
                    best = Some((trial_cost, mi, c));
                }
            }
        }
        match best {
            Some((new_cost, mi, c)) => {
                medoids[mi] = c;
                cost = new_cost;
            }
            None => break,
        }
    }
    medoids.sort_unstable();
    Ok(medoids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn candidate(id: &str, patient: &str, score: f64, vector: Vec<f64>) -> Candidate<f64> {
        Candidate { id: id.to_string(), patient_id: patient.to_string(), score, vector }
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[0.0, 5.0, 10.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[3.0, 3.0, 3.0]).unwrap(), vec![0.5, 0.5, 0.5]);
        assert_eq!(minmax_normalize(&[-2.0, 0.0, 2.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(minmax_normalize(&[f64::NAN]).is_err());
        assert!(minmax_normalize::<f64>(&[]).is_err());
    }

    #[test]
    fn k_equals_candidates_returns_everyone() {
        let cands: Vec<Candidate<f64>> =
            (0..4).map(|i| candidate(&format!("c{i}"), "p", 0.0, vec![i as f64])).collect();
        assert_eq!(representative_patches(&cands, 4).unwrap(), vec![0, 1, 2, 3]);
        assert!(representative_patches(&cands, 5).is_err());
    }

    #[test]
    fn two_separated_clusters_match_exhaustive_search() {
        let points = [0.0, 1.0, 2.0, 10.0, 11.0, 12.5];
        let cands: Vec<Candidate<f64>> = points
            .iter()
            .enumerate()
            .map(|(i, &x)| candidate(&format!("c{i}"), &format!("p{i}"), 0.0, vec![x]))
            .collect();
        let medoids = representative_patches(&cands, 2).unwrap();

        // Oracle: exhaustive enumeration over all medoid pairs.
        let n = points.len();
        let mut best = (f64::INFINITY, vec![]);
        for a in 0..n {
            for b in (a + 1)..n {
                let cost: f64 = points
                    .iter()
                    .map(|&x| (x - points[a]).abs().min((x - points[b]).abs()))
                    .sum();
                if cost < best.0 {
                    best = (cost, vec![a, b]);
                }
            }
        }
        assert_eq!(medoids, best.1);
    }

    #[test]
    fn duplicated_candidates_give_same_medoid_vectors() {
        let points = [0.0, 0.5, 8.0, 8.5];
        let single: Vec<Candidate<f64>> = points
            .iter()
            .enumerate()
            .map(|(i, &x)| candidate(&format!("c{i}"), &format!("p{i}"), 0.0, vec![x]))
            .collect();
        let doubled: Vec<Candidate<f64>> = points
            .iter()
            .chain(points.iter())
            .enumerate()
            .map(|(i, &x)| candidate(&format!("d{i}"), &format!("q{i}"), 0.0, vec![x]))
            .collect();
        let m1: Vec<f64> = representative_patches(&single, 2).unwrap().iter().map(|&i| single[i].vector[0]).collect();
        let m2: Vec<f64> = representative_patches(&doubled, 2).unwrap().iter().map(|&i| doubled[i].vector[0]).collect();
        let mut m1s = m1.clone();
        m1s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut m2s = m2.clone();
        m2s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(m1s, m2s);
    }

    #[test]
    fn extreme_selection_per_patient_with_seeded_draws() {
        let cands = vec![
            candidate("a0", "P1", 0.3, vec![0.0]),
            candidate("a1", "P1", 0.9, vec![0.0]),
            candidate("b0", "P2", 0.4, vec![0.0]),
            candidate("b1", "P2", 0.4, vec![0.0]),
        ];
        let high = select_extreme_per_patient(&cands, ExtremeMode::Highest, 1);
        assert_eq!(high[0], 1, "P1's maximum is unambiguous");
        assert!(high[1] == 2 || high[1] == 3, "P2 draw broken at random");
        let again = select_extreme_per_patient(&cands, ExtremeMode::Highest, 1);
        assert_eq!(high, again, "same seed, same draw");

        let low = select_extreme_per_patient(&cands, ExtremeMode::Lowest, 1);
        assert_eq!(low[0], 0);
    }
}
