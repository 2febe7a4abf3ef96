//! Concordance index, Kaplan-Meier curves and the log-rank test.

use super::stats::chi2_sf_1df;
use crate::error::{Error, Result};
use crate::machines::survival::{comparable_pairs, SurvivalRecord};
use crate::scalar::Real;

/// Agreement between risk ordering and survival ordering over comparable
/// pairs: concordant pairs score 1, tied risks 0.5.
pub fn concordance_index<F: Real>(records: &[SurvivalRecord], risks: &[F]) -> Result<f64> {
    if records.len() != risks.len() {
        return Err(Error::validation("one risk score per record is required"));
    }
    let pairs = comparable_pairs(records);
    if pairs.is_empty() {
        return Err(Error::validation("concordance index needs at least one comparable pair"));
    }
    let mut score = 0.0;
    for &(i, j) in &pairs {
        if risks[i] > risks[j] {
            score += 1.0;
        } else if risks[i] == risks[j] {
            score += 0.5;
        }
    }
    Ok(score / pairs.len() as f64)
}

/// One group's product-limit curve. Starts at probability 1.0 and drops only
/// at event times; censoring shrinks the at-risk count without a drop.
#[derive(Debug, Clone, PartialEq)]
pub struct KMCurve {
    pub group: String,
    /// Time grid including the leading 0.
    pub times: Vec<f64>,
    /// Survival probability after each grid time.
    pub survival: Vec<f64>,
    /// Number at risk just before each grid time.
    pub at_risk: Vec<usize>,
}

/// Product-limit estimator over one nonempty group.
pub fn km_curve(records: &[SurvivalRecord], group: impl Into<String>) -> Result<KMCurve> {
    if records.is_empty() {
        return Err(Error::validation("Kaplan-Meier requires a nonempty group"));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].time.partial_cmp(&records[b].time).expect("finite times"));

    let mut times = vec![0.0];
    let mut survival = vec![1.0];
    let mut at_risk = vec![records.len()];

    let mut s = 1.0;
    let mut i = 0;
    let mut n_risk = records.len();
    while i < order.len() {
        let t = records[order[i]].time;
        let mut events = 0usize;
        let mut leaving = 0usize;
        while i < order.len() && records[order[i]].time == t {
            if records[order[i]].event {
                events += 1;
            }
            leaving += 1;
            i += 1;
        }
        if events > 0 {
            s *= 1.0 - events as f64 / n_risk as f64;
        }
        times.push(t);
        survival.push(s);
        at_risk.push(n_risk);
        n_risk -= leaving;
    }
    Ok(KMCurve { group: group.into(), times, survival, at_risk })
}

/// Two-group log-rank test. Returns `(chi-square statistic, p-value)` with
/// one degree of freedom.
pub fn logrank(group_a: &[SurvivalRecord], group_b: &[SurvivalRecord]) -> Result<(f64, f64)> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::validation("log-rank requires two nonempty groups"));
    }
    if !group_a.iter().chain(group_b).any(|r| r.event) {
        return Err(Error::validation("log-rank requires at least one event"));
    }

    let mut event_times: Vec<f64> = group_a
        .iter()
        .chain(group_b)
        .filter(|r| r.event)
        .map(|r| r.time)
        .collect();
    event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    event_times.dedup();

    let at_risk = |g: &[SurvivalRecord], t: f64| g.iter().filter(|r| r.time >= t).count() as f64;
    let events_at = |g: &[SurvivalRecord], t: f64| g.iter().filter(|r| r.event && r.time == t).count() as f64;

    let mut observed_a = 0.0;
    let mut expected_a = 0.0;
    let mut variance = 0.0;
    for &t in &event_times {
        let n1 = at_risk(group_a, t);
        let n2 = at_risk(group_b, t);
        let n = n1 + n2;
        if n < 2.0 {
            continue;
        }
        let d1 = events_at(group_a, t);
        let d2 = events_at(group_b, t);
        let d = d1 + d2;
        observed_a += d1;
        expected_a += d * n1 / n;
        variance += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1.0);
    }
    if variance == 0.0 {
        return Ok((0.0, 1.0));
    }
    let statistic = (observed_a - expected_a).powi(2) / variance;
    Ok((statistic, chi2_sf_1df(statistic)))
}

/// Fold aggregation rule for per-fold log-rank p-values: twice the median.
/// The rule is applied literally; values above 1 are reported as computed.
pub fn aggregate_fold_pvalues(pvalues: &[f64]) -> Result<f64> {
    if pvalues.is_empty() {
        return Err(Error::validation("cannot aggregate zero p-values"));
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Ok(2.0 * median)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(time: f64, event: bool) -> SurvivalRecord {
        SurvivalRecord::new(format!("p{time}"), time, event).unwrap()
    }

    #[test]
    fn cindex_perfect_and_inverted() {
        let records = vec![record(1.0, true), record(2.0, true), record(3.0, true)];
        // Risks inversely ordered to times -> perfect concordance.
        assert_eq!(concordance_index(&records, &[3.0, 2.0, 1.0]).unwrap(), 1.0);
        // Risks aligned with times -> zero.
        assert_eq!(concordance_index(&records, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn cindex_censoring_example_two_thirds() {
        // T = (1, 2, 3), events (1, 1, 0), risks (3, 1, 2):
        // comparable pairs (0,1), (0,2), (1,2); concordant (0,1) and (0,2).
        let records = vec![record(1.0, true), record(2.0, true), record(3.0, false)];
        let c = concordance_index(&records, &[3.0, 1.0, 2.0]).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-15, "{c}");
    }

    #[test]
    fn cindex_complement_under_negation() {
        let records = vec![record(1.0, true), record(2.5, true), record(3.0, false), record(4.0, true)];
        let risks = [0.9, 0.4, 0.7, 0.1];
        let neg: Vec<f64> = risks.iter().map(|r| -r).collect();
        let c = concordance_index(&records, &risks).unwrap();
        let cn = concordance_index(&records, &neg).unwrap();
        assert!((c + cn - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cindex_invariant_under_increasing_transform() {
        let records = vec![record(1.0, true), record(2.0, true), record(3.0, true), record(5.0, false)];
        let risks: [f64; 4] = [2.0, -1.0, 0.5, 0.1];
        let transformed: Vec<f64> = risks.iter().map(|r| r.exp()).collect();
        assert_eq!(
            concordance_index(&records, &risks).unwrap(),
            concordance_index(&records, &transformed).unwrap()
        );
    }

    #[test]
    fn cindex_no_comparable_pairs_errors() {
        let records = vec![record(1.0, false), record(2.0, false)];
        assert!(concordance_index(&records, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn km_no_events_stays_flat() {
        let records = vec![record(1.0, false), record(2.0, false), record(3.0, false)];
        let curve = km_curve(&records, "all").unwrap();
        assert!(curve.survival.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn km_single_event_drop() {
        // n = 4, one event at t = 2, no earlier censoring: survival 0.75.
        let records = vec![record(2.0, true), record(3.0, false), record(4.0, false), record(5.0, false)];
        let curve = km_curve(&records, "g").unwrap();
        assert_eq!(curve.survival[0], 1.0);
        let at_two = curve.times.iter().position(|&t| t == 2.0).unwrap();
        assert!((curve.survival[at_two] - 0.75).abs() < 1e-15);
        assert_eq!(curve.at_risk[at_two], 4);
        // Later censorings do not drop the curve.
        assert!(curve.survival[at_two..].iter().all(|&s| (s - 0.75).abs() < 1e-15));
    }

    #[test]
    fn km_censoring_reduces_at_risk_without_drop() {
        let records = vec![record(1.0, false), record(2.0, true), record(3.0, false)];
        let curve = km_curve(&records, "g").unwrap();
        let at_one = curve.times.iter().position(|&t| t == 1.0).unwrap();
        assert_eq!(curve.survival[at_one], 1.0);
        let at_two = curve.times.iter().position(|&t| t == 2.0).unwrap();
        assert_eq!(curve.at_risk[at_two], 2);
        assert!((curve.survival[at_two] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn km_matches_empirical_survival_without_censoring() {
        let records = vec![record(1.0, true), record(2.0, true), record(2.0, true), record(4.0, true)];
        let curve = km_curve(&records, "g").unwrap();
        // Empirical survivor function: fraction with T > t.
        for (idx, &t) in curve.times.iter().enumerate() {
            let empirical = records.iter().filter(|r| r.time > t).count() as f64 / records.len() as f64;
            assert!((curve.survival[idx] - empirical).abs() < 1e-15, "at {t}");
        }
    }

    #[test]
    fn logrank_identical_groups_statistic_zero() {
        let g: Vec<SurvivalRecord> =
            vec![record(1.0, true), record(2.0, false), record(3.0, true), record(4.0, false)];
        let (stat, p) = logrank(&g, &g).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn logrank_separated_groups_is_significant() {
        // All group-A events strictly before any group-B event, n = 20 each.
        let a: Vec<SurvivalRecord> = (0..20).map(|i| record(1.0 + i as f64 * 0.1, true)).collect();
        let b: Vec<SurvivalRecord> = (0..20).map(|i| record(10.0 + i as f64 * 0.1, true)).collect();
        let (stat, p) = logrank(&a, &b).unwrap();

        // Oracle: evaluate the chi-square formula on the 2xK table directly.
        let mut observed = 0.0;
        let mut expected = 0.0;
        let mut variance = 0.0;
        let mut times: Vec<f64> = a.iter().chain(&b).map(|r| r.time).collect();
        times.sort_by(|x, y| x.partial_cmp(y).unwrap());
        times.dedup();
        for &t in &times {
            let n1 = a.iter().filter(|r| r.time >= t).count() as f64;
            let n2 = b.iter().filter(|r| r.time >= t).count() as f64;
            let d1 = a.iter().filter(|r| r.time == t && r.event).count() as f64;
            let d2 = b.iter().filter(|r| r.time == t && r.event).count() as f64;
            let n = n1 + n2;
            let d = d1 + d2;
            if n < 2.0 || d == 0.0 {
                continue;
            }
            observed += d1;
            expected += d * n1 / n;
            variance += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1.0);
        }
        let oracle_stat = (observed - expected).powi(2) / variance;
        assert!((stat - oracle_stat).abs() < 1e-9);
        assert!(p < 0.001, "{p}");
    }

    #[test]
    fn logrank_requires_an_event() {
        let a = vec![record(1.0, false)];
        let b = vec![record(2.0, false)];
        assert!(logrank(&a, &b).is_err());
    }

    #[test]
    fn fold_aggregation_doubles_the_median() {
        let p = aggregate_fold_pvalues(&[0.01, 0.02, 0.03, 0.04, 0.05]).unwrap();
        assert!((p - 0.06).abs() < 1e-15);
        let p = aggregate_fold_pvalues(&[0.2, 0.4]).unwrap();
        assert!((p - 0.6).abs() < 1e-15);
    }
}
