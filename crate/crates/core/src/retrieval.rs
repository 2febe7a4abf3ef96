//! Top-k similar-bag retrieval by kernel-row sorting, with the
//! majority-vote-at-k evaluation metric.

use crate::error::{Error, Result};
use crate::matrix::KernelMatrix;
use crate::scalar::Real;
use std::collections::BTreeMap;

/// One ranked retrieval answer.
#[derive(Debug, Clone)]
pub struct RetrievalResult<F> {
    pub query_id: String,
    /// `(neighbor id, similarity)` sorted by similarity descending; equal
    /// similarities keep dataset order. Never contains the query itself or
    /// any bag sharing its patient.
    pub neighbors: Vec<(String, F)>,
    pub k: usize,
}

/// Eligible pool for one query: every index except the query itself, bags of
/// the query's patient, and (when sites are supplied) bags from other sites.
fn eligible_pool(
    n: usize,
    query: usize,
    patients: &[String],
    sites: Option<&[String]>,
) -> Vec<usize> {
    (0..n)
        .filter(|&i| i != query)
        .filter(|&i| patients[i] != patients[query])
        .filter(|&i| sites.map_or(true, |s| s[i] == s[query]))
        .collect()
}

/// The `k` most similar eligible bags for `query_id`, in descending
/// similarity with stable ties.
pub fn query_top_k<F: Real>(
    kernel: &KernelMatrix<F>,
    patients: &[String],
    sites: Option<&[String]>,
    query_id: &str,
    k: usize,
) -> Result<RetrievalResult<F>> {
    if patients.len() != kernel.n() {
        return Err(Error::validation("one patient per kernel id is required"));
    }
    if let Some(s) = sites {
        if s.len() != kernel.n() {
            return Err(Error::validation("one site per kernel id is required"));
        }
    }
    if k == 0 {
        return Err(Error::validation("k must be >= 1"));
    }
    let query = kernel
        .index_of(query_id)
        .ok_or_else(|| Error::validation(format!("unknown query id '{query_id}'")))?;
    let pool = eligible_pool(kernel.n(), query, patients, sites);
    if pool.len() < k {
        return Err(Error::validation(format!(
            "retrieval pool for '{query_id}' holds {} bags, fewer than k = {k}",
            pool.len()
        )));
    }
    let row = kernel.row(query);
    let mut ranked = pool;
    // Stable sort: ties keep dataset order.
    ranked.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).expect("finite similarities"));
    ranked.truncate(k);
    Ok(RetrievalResult {
        query_id: query_id.to_string(),
        neighbors: ranked.into_iter().map(|i| (kernel.ids[i].clone(), row[i])).collect(),
        k,
    })
}

/// Majority-vote accuracy of the whole matrix, micro and per label.
#[derive(Debug, Clone)]
pub struct MmvReport {
    /// Percentage of queries whose label wins the top-k majority vote.
    pub overall: f64,
    /// Label -> (number of queries, percentage correct).
    pub per_label: BTreeMap<String, (usize, f64)>,
    /// Unweighted mean of the per-label percentages.
    pub macro_average: f64,
    /// Per-query hit flags in dataset order.
    pub per_query: Vec<(String, bool)>,
    pub k: usize,
}

/// Runs every bag as a query and scores the top-k majority vote against its
/// label. The ground truth must attain the maximum label count; multi-modal
/// ties go to the tied label whose best-ranked neighbor comes first.
pub fn mmv_at_k<F: Real>(
    kernel: &KernelMatrix<F>,
    patients: &[String],
    sites: Option<&[String]>,
    labels: &[Option<String>],
    k: usize,
) -> Result<MmvReport> {
    if labels.len() != kernel.n() {
        return Err(Error::validation("one label slot per kernel id is required"));
    }
    let missing: Vec<&str> = kernel
        .ids
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.is_none())
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!("bags without a label: {}", missing.join(", "))));
    }

    let mut per_query = Vec::with_capacity(kernel.n());
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (q, id) in kernel.ids.iter().enumerate() {
        let truth = labels[q].as_deref().unwrap();
        let result = query_top_k(kernel, patients, sites, id, k)?;
        let retrieved: Vec<&str> = result
            .neighbors
            .iter()
            .map(|(nid, _)| labels[kernel.index_of(nid).unwrap()].as_deref().unwrap())
            .collect();

        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in &retrieved {
            *counts.entry(l).or_default() += 1;
        }
        let max_count = counts.values().copied().max().unwrap_or(0);
        let winner = counts
            .iter()
            .filter(|(_, &c)| c == max_count)
            .map(|(&l, _)| (retrieved.iter().position(|&r| r == l).unwrap(), l))
            .min()
            .map(|(_, l)| l);
        let hit = winner == Some(truth);

        per_query.push((id.clone(), hit));
        let entry = tally.entry(truth.to_string()).or_default();
        entry.0 += 1;
        entry.1 += hit as usize;
    }

    let hits = per_query.iter().filter(|(_, h)| *h).count();
    let overall = 100.0 * hits as f64 / per_query.len() as f64;
    let per_label: BTreeMap<String, (usize, f64)> = tally
        .into_iter()
        .map(|(label, (n, h))| (label, (n, 100.0 * h as f64 / n as f64)))
        .collect();
    let macro_average = per_label.values().map(|(_, pct)| pct).sum::<f64>() / per_label.len() as f64;
    Ok(MmvReport { overall, per_label, macro_average, per_query, k })
}
