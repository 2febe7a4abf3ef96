//! Secondary-modality kernels and unweighted multi-kernel combination.
//!
//! The topic kernel uses a `2 sigma^2` denominator, unlike the patch-level
//! kernel's `4 sigma^2`; both bandwidths default to 10. Combination is
//! unweighted: an entrywise sum (rescaled by the kernel count to keep the
//! unit diagonal, toggleable) or an entrywise product.

use crate::error::{Error, Result};
use crate::matrix::{KernelMatrix, SquareMatrix};
use crate::scalar::Real;
use std::path::Path;

/// Default topic-kernel bandwidth.
pub const DEFAULT_TOPIC_SIGMA: f64 = 10.0;

/// One patient's binary topic profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicProfile {
    pub patient_id: String,
    pub topics: Vec<u8>,
}

impl TopicProfile {
    pub fn new(patient_id: impl Into<String>, topics: Vec<u8>) -> Result<Self> {
        if topics.is_empty() {
            return Err(Error::validation("topic profile cannot be empty"));
        }
        if topics.iter().any(|&t| t > 1) {
            return Err(Error::validation("topic entries must be 0 or 1"));
        }
        Ok(TopicProfile { patient_id: patient_id.into(), topics })
    }
}

/// Loads topic profiles from CSV: header, then `patient_id` followed by the
/// binary topic columns.
pub fn load_topic_profiles(path: impl AsRef<Path>) -> Result<Vec<TopicProfile>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut profiles = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut fields = record.iter();
        let patient_id = fields
            .next()
            .ok_or_else(|| Error::format("topic row without a patient id"))?
            .to_string();
        let topics: Result<Vec<u8>> = fields
            .map(|f| match f.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::validation(format!(
                    "non-binary topic value '{other}' for patient {patient_id}"
                ))),
            })
            .collect();
        profiles.push(TopicProfile::new(patient_id, topics?)?);
    }
    Ok(profiles)
}

/// RBF kernel over binary topic profiles:
/// `K[i][j] = exp(-||t_i - t_j||^2 / (2 sigma^2))`. For binary vectors the
/// squared norm is the count of differing bits.
pub fn topic_kernel<F: Real>(profiles: &[TopicProfile], sigma: F) -> Result<KernelMatrix<F>> {
    if profiles.is_empty() {
        return Err(Error::validation("cannot build a kernel over zero profiles"));
    }
    if !(sigma > F::zero()) {
        return Err(Error::validation("sigma must be positive"));
    }
    let len = profiles[0].topics.len();
    for p in profiles {
        if p.topics.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: p.topics.len() });
        }
    }
    let ids: Vec<String> = profiles.iter().map(|p| p.patient_id.clone()).collect();
    {
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(Error::validation("duplicate patient id among topic profiles"));
        }
    }
    let n = profiles.len();
    let inv = F::one() / (F::from_f64_lossy(2.0) * sigma * sigma);
    let mut values = SquareMatrix::zeros(n);
    for i in 0..n {
        values.set(i, i, F::one());
        for j in (i + 1)..n {
            let differing = profiles[i]
                .topics
                .iter()
                .zip(&profiles[j].topics)
                .filter(|(a, b)| a != b)
                .count();
            let k = (-F::from_usize(differing).unwrap() * inv).exp();
            values.set(i, j, k);
            values.set(j, i, k);
        }
    }
    KernelMatrix::new(ids, values, None, Some(sigma.as_f64()), None, format!("topics(sigma={})", sigma.as_f64()))
}

/// Restricts and reorders every kernel to the sorted intersection of their
/// id sets. Errors when the intersection is empty.
pub fn align<F: Real>(kernels: &[KernelMatrix<F>]) -> Result<Vec<KernelMatrix<F>>> {
    if kernels.is_empty() {
        return Err(Error::validation("nothing to align"));
    }
    let mut shared: Vec<String> = kernels[0].ids.clone();
    for k in &kernels[1..] {
        shared.retain(|id| k.ids.contains(id));
    }
    shared.sort();
    if shared.is_empty() {
        return Err(Error::validation("kernels share no ids"));
    }
    kernels
        .iter()
        .map(|k| {
            let idx: Vec<usize> = shared.iter().map(|id| k.index_of(id).unwrap()).collect();
            Ok(k.select(&idx))
        })
        .collect()
}

/// How aligned kernels are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    Sum,
    Product,
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FusionMode::Sum => write!(f, "sum"),
            FusionMode::Product => write!(f, "product"),
        }
    }
}

/// Entrywise combination of pre-aligned kernels. `rescale_sum` divides the
/// sum by the kernel count so the diagonal stays 1; the product keeps a unit
/// diagonal on its own.
pub fn combine<F: Real>(kernels: &[KernelMatrix<F>], mode: FusionMode, rescale_sum: bool) -> Result<KernelMatrix<F>> {
    if kernels.len() < 2 {
        return Err(Error::validation("combining needs at least 2 kernels"));
    }
    let ids = &kernels[0].ids;
    for k in &kernels[1..] {
        if &k.ids != ids {
            return Err(Error::validation("kernels are misaligned; call align first"));
        }
    }
    let n = kernels[0].n();
    let mut values = SquareMatrix::zeros(n);
    match mode {
        FusionMode::Sum => {
            let scale = if rescale_sum {
                F::one() / F::from_usize(kernels.len()).unwrap()
            } else {
                F::one()
            };
            for i in 0..n {
                for j in 0..n {
                    let mut s = F::zero();
                    for k in kernels {
                        s = s + k.get(i, j);
                    }
                    values.set(i, j, s * scale);
                }
            }
        }
        FusionMode::Product => {
            for i in 0..n {
                for j in 0..n {
                    let mut p = F::one();
                    for k in kernels {
                        p = p * k.get(i, j);
                    }
                    values.set(i, j, p);
                }
            }
        }
    }
    let recipe = format!(
        "{mode}({})",
        kernels.iter().map(|k| k.provenance.as_str()).collect::<Vec<_>>().join(", ")
    );
    if matches!(mode, FusionMode::Sum) && !rescale_sum {
        // Raw sums leave the [0,1]/unit-diagonal range; keep the metadata but
        // skip the kernel-range validation.
        return Ok(KernelMatrix::new_unchecked(ids.clone(), values, None, None, None, recipe));
    }
    KernelMatrix::new(ids.clone(), values, None, None, None, recipe)
}
