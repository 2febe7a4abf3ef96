//! Rank correlation, classifier strength and paired-sample statistics.

use crate::error::{Error, Result};
use crate::scalar::Real;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// AUC-ROC strength bins; the 0.6 and 0.7 boundaries round upward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AucBin {
    Weak,
    Moderate,
    Strong,
}

impl AucBin {
    pub const MODERATE_THRESHOLD: f64 = 0.6;
    pub const STRONG_THRESHOLD: f64 = 0.7;

    pub fn from_auc(auc: f64) -> AucBin {
        if auc >= Self::STRONG_THRESHOLD {
            AucBin::Strong
        } else if auc >= Self::MODERATE_THRESHOLD {
            AucBin::Moderate
        } else {
            AucBin::Weak
        }
    }
}

impl std::fmt::Display for AucBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AucBin::Weak => write!(f, "weak"),
            AucBin::Moderate => write!(f, "moderate"),
            AucBin::Strong => write!(f, "strong"),
        }
    }
}

/// 1-based average ranks, ties sharing the mean of their positions.
pub(crate) fn average_ranks<F: Real>(values: &[F]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank ties and the two-sided
/// p-value from the t-approximation with `n - 2` degrees of freedom.
pub fn spearman<F: Real>(y_true: &[F], y_pred: &[F]) -> Result<(F, f64)> {
    if y_true.len() != y_pred.len() {
        return Err(Error::validation("spearman inputs must have equal length"));
    }
    let n = y_true.len();
    if n < 3 {
        return Err(Error::validation("spearman requires at least 3 pairs"));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::validation("spearman inputs must be finite"));
    }
    let ra = average_ranks(y_true);
    let rb = average_ranks(y_pred);
    let mean = (n as f64 + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..n {
        let da = ra[i] - mean;
        let db = rb[i] - mean;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::validation("spearman is undefined for a constant input"));
    }
    let rho = cov / (var_a * var_b).sqrt();

    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((F::from_f64_lossy(rho), p))
}

/// AUC-ROC by Mann-Whitney pair counting with half credit on score ties,
/// plus the strength bin.
pub fn auc_roc<F: Real>(labels: &[u8], scores: &[F]) -> Result<(f64, AucBin)> {
    if labels.len() != scores.len() {
        return Err(Error::validation("auc inputs must have equal length"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::validation("auc labels must be 0 or 1"));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("auc scores must be finite"));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::validation("auc requires both classes present"));
    }
    // Rank formulation: average ranks give exactly half credit to ties.
    let ranks = average_ranks(scores);
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64);
    Ok((auc, AucBin::from_auc(auc)))
}

/// One-sided (greater) Wilcoxon signed-rank test for paired samples.
///
/// Zero differences are dropped. Up to 25 effective pairs the p-value comes
/// from the exact null distribution (dynamic program over doubled ranks);
/// above that, a normal approximation with continuity correction and
/// tie-corrected variance.
pub fn wilcoxon_signed_rank_greater<F: Real>(a: &[F], b: &[F]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::validation("wilcoxon inputs must have equal length"));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).as_f64())
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::validation("wilcoxon inputs must be finite"));
    }
    let n = diffs.len();
    if n == 0 {
        return Err(Error::validation("wilcoxon requires at least one nonzero difference"));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(&d, _)| d > 0.0)
        .map(|(_, &r)| r)
        .sum();

    if n <= 25 {
        // Average ranks are half-integers; doubling makes the DP integral.
        let doubled: Vec<usize> = ranks.iter().map(|&r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0u128; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let threshold = (2.0 * w_plus).round() as usize;
        let at_least: u128 = counts[threshold..].iter().sum();
        Ok(at_least as f64 / (1u128 << n) as f64)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        // Tie correction: subtract sum(t^3 - t)/48 per tie group.
        let mut sorted = magnitudes.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            variance -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        let z = (w_plus - mean - 0.5) / variance.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        Ok(1.0 - normal.cdf(z))
    }
}

/// Upper tail of the chi-squared distribution with one degree of freedom.
pub(crate) fn chi2_sf_1df(statistic: f64) -> f64 {
    let dist = ChiSquared::new(1.0).expect("valid dof");
    1.0 - dist.cdf(statistic)
}
