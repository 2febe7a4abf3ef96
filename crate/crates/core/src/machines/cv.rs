//! Patient-grouped cross-validation and deterministic grid tuning.
//!
//! Folds partition patient groups, never single bags, so no patient spans
//! two folds. Within each training fold a validation slice is carved for
//! hyperparameter search, the kernel decay `gamma` is re-resolved on the
//! training-fold distance submatrix only, and the winning candidate is
//! refit on the whole training fold before scoring the test fold.

use crate::analysis::stats::{auc_roc, spearman};
use crate::analysis::survival::concordance_index;
use crate::error::{Error, Result};
use crate::machines::smo::{fit_svc, fit_svr};
use crate::machines::survival::{comparable_pairs, fit_survival, SurvivalRecord};
use crate::machines::{DualModel, TaskKind};
use crate::matrix::{DistanceMatrix, KernelFingerprint, SquareMatrix};
use crate::mmd::median_gamma;
use crate::scalar::Real;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// How to pick the kernel decay rate on a training fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    /// Multiple of the median of the flattened training distance submatrix.
    /// `MedianTimes(1.0)` is the default median rule.
    MedianTimes(f64),
    Fixed(f64),
}

impl GammaRule {
    pub fn resolve<F: Real>(&self, d: &DistanceMatrix<F>, train_idx: &[usize]) -> f64 {
        match *self {
            GammaRule::Fixed(g) => g,
            GammaRule::MedianTimes(m) => m * median_gamma(&d.select(train_idx)).as_f64(),
        }
    }

    fn multiplier_for_ties(&self) -> f64 {
        match *self {
            GammaRule::MedianTimes(m) => m,
            GammaRule::Fixed(g) => g,
        }
    }
}

/// One hyperparameter candidate. Fields that a task does not use are
/// carried but ignored by the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub c: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: GammaRule,
}

impl GridPoint {
    /// Default search grids; the survival default is a single point (alpha
    /// fixed, median gamma), searched only when an alpha sweep is requested.
    pub fn default_grid(task: TaskKind) -> Vec<GridPoint> {
        let cs = [0.1, 1.0, 10.0, 100.0];
        let epsilons = [0.01, 0.1];
        let gammas = [GammaRule::MedianTimes(1.0), GammaRule::MedianTimes(2.0)];
        match task {
            TaskKind::Svr => {
                let mut grid = Vec::new();
                for &gamma in &gammas {
                    for &c in &cs {
                        for &epsilon in &epsilons {
                            grid.push(GridPoint { c, epsilon, alpha: 0.0, gamma });
                        }
                    }
                }
                grid
            }
            TaskKind::Svc => {
                let mut grid = Vec::new();
                for &gamma in &gammas {
                    for &c in &cs {
                        grid.push(GridPoint { c, epsilon: 0.0, alpha: 0.0, gamma });
                    }
                }
                grid
            }
            TaskKind::Survival => vec![GridPoint {
                c: 0.0,
                epsilon: 0.0,
                alpha: crate::machines::survival::DEFAULT_ALPHA,
                gamma: GammaRule::MedianTimes(1.0),
            }],
        }
    }

    /// 13 log-spaced alpha candidates over `[2^-12, 2^-3]`, median gamma.
    pub fn alpha_sweep() -> Vec<GridPoint> {
        (0..13)
            .map(|i| GridPoint {
                c: 0.0,
                epsilon: 0.0,
                alpha: 2f64.powf(-12.0 + 0.75 * i as f64),
                gamma: GammaRule::MedianTimes(1.0),
            })
            .collect()
    }

    /// Tie order: prefer the more regularized candidate (larger alpha, then
    /// smaller C, then larger epsilon, then smaller gamma multiplier).
    fn more_regularized_than(&self, other: &GridPoint) -> bool {
        if self.alpha != other.alpha {
            return self.alpha > other.alpha;
        }
        if self.c != other.c {
            return self.c < other.c;
        }
        if self.epsilon != other.epsilon {
            return self.epsilon > other.epsilon;
        }
        self.gamma.multiplier_for_ties() < other.gamma.multiplier_for_ties()
    }
}

/// Labels for one task, aligned with the distance matrix ids.
#[derive(Debug, Clone)]
pub enum TaskLabels<F: Real> {
    Svr(Vec<F>),
    Svc(Vec<i8>),
    Survival(Vec<SurvivalRecord>),
}

impl<F: Real> TaskLabels<F> {
    pub fn task(&self) -> TaskKind {
        match self {
            TaskLabels::Svr(_) => TaskKind::Svr,
            TaskLabels::Svc(_) => TaskKind::Svc,
            TaskLabels::Survival(_) => TaskKind::Survival,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TaskLabels::Svr(v) => v.len(),
            TaskLabels::Svc(v) => v.len(),
            TaskLabels::Survival(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> TaskLabels<F> {
        match self {
            TaskLabels::Svr(v) => TaskLabels::Svr(idx.iter().map(|&i| v[i]).collect()),
            TaskLabels::Svc(v) => TaskLabels::Svc(idx.iter().map(|&i| v[i]).collect()),
            TaskLabels::Survival(v) => TaskLabels::Survival(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    /// Stratum key per sample: class for classification, event indicator for
    /// survival, a single stratum for regression.
    fn strata(&self) -> Vec<i64> {
        match self {
            TaskLabels::Svr(v) => vec![0; v.len()],
            TaskLabels::Svc(v) => v.iter().map(|&l| l as i64).collect(),
            TaskLabels::Survival(v) => v.iter().map(|r| r.event as i64).collect(),
        }
    }
}

/// Cross-validation setup.
#[derive(Debug, Clone)]
pub struct CvConfig {
    pub folds: usize,
    pub val_frac: f64,
    pub seed: u64,
    pub stratify: bool,
    pub group_by_patient: bool,
    pub grid: Vec<GridPoint>,
}

impl CvConfig {
    pub fn new(task: TaskKind, folds: usize, val_frac: f64, seed: u64) -> Self {
        CvConfig {
            folds,
            val_frac,
            seed,
            stratify: !matches!(task, TaskKind::Svr),
            group_by_patient: true,
            grid: GridPoint::default_grid(task),
        }
    }
}

/// One fold's held-out evaluation.
#[derive(Debug, Clone)]
pub struct FoldOutcome<F> {
    pub fold: usize,
    pub test_ids: Vec<String>,
    pub predictions: Vec<F>,
    pub metric: f64,
    pub chosen: GridPoint,
    /// Resolved decay rate on this training fold.
    pub gamma: f64,
}

/// Per-fold outcomes plus their mean and sample standard deviation.
#[derive(Debug, Clone)]
pub struct FoldResults<F> {
    pub task: TaskKind,
    pub metric_name: &'static str,
    pub folds: Vec<FoldOutcome<F>>,
    pub mean: f64,
    pub sd: f64,
}

pub(crate) fn metric_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Svr => "scc",
        TaskKind::Svc => "auc",
        TaskKind::Survival => "cindex",
    }
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt)
}

struct Group {
    indices: Vec<usize>,
    stratum: i64,
}

fn build_groups(patients: &[String], strata: &[i64], group_by_patient: bool) -> Vec<Group> {
    let mut order: Vec<String> = Vec::new();
    let mut by_key: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, p) in patients.iter().enumerate() {
        let key = if group_by_patient { p.clone() } else { format!("#{i}") };
        if !by_key.contains_key(&key) {
            order.push(key.clone());
        }
        by_key.entry(key).or_default().push(i);
    }
    order
        .into_iter()
        .map(|key| {
            let indices = by_key.remove(&key).unwrap();
            // Majority stratum, ties toward the first sample's stratum.
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            for &i in &indices {
                *counts.entry(strata[i]).or_default() += 1;
            }
            let first = strata[indices[0]];
            let max = counts.values().copied().max().unwrap();
            let stratum = if counts.get(&first) == Some(&max) {
                first
            } else {
                *counts.iter().find(|(_, &c)| c == max).unwrap().0
            };
            Group { indices, stratum }
        })
        .collect()
}

/// Deterministic stratified round-robin of groups onto folds. Returns the
/// fold id per group.
fn assign_folds(groups: &[Group], folds: usize, stratify: bool, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<i64> = if stratify {
        let mut s: Vec<i64> = groups.iter().map(|g| g.stratum).collect();
        s.sort_unstable();
        s.dedup();
        s
    } else {
        vec![0]
    };
    if !stratify {
        strata = vec![i64::MIN];
    }
    let mut assignment = vec![0usize; groups.len()];
    let mut cursor = 0usize;
    for stratum in strata {
        let mut members: Vec<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| !stratify || g.stratum == stratum)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        for g in members {
            assignment[g] = cursor % folds;
            cursor += 1;
        }
    }
    assignment
}

/// Splits `group_ids` into (kept, carved) with roughly `frac` carved,
/// stratified over the groups' strata.
fn carve_validation(
    groups: &[Group],
    group_ids: &[usize],
    frac: f64,
    stratify: bool,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<i64> = group_ids.iter().map(|&g| groups[g].stratum).collect();
    strata.sort_unstable();
    strata.dedup();
    if !stratify {
        strata = vec![i64::MIN];
    }
    let mut kept = Vec::new();
    let mut carved = Vec::new();
    for stratum in strata {
        let mut members: Vec<usize> = group_ids
            .iter()
            .copied()
            .filter(|&g| !stratify || groups[g].stratum == stratum)
            .collect();
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * frac).ceil() as usize).min(members.len().saturating_sub(1));
        carved.extend_from_slice(&members[..take]);
        kept.extend_from_slice(&members[take..]);
    }
    kept.sort_unstable();
    carved.sort_unstable();
    (kept, carved)
}

/// Entrywise `exp(-gamma d)` over a rows-by-cols rectangle of the distance
/// matrix.
fn kernel_rect<F: Real>(d: &DistanceMatrix<F>, gamma: f64, rows: &[usize], cols: &[usize]) -> Vec<F> {
    let g = F::from_f64_lossy(gamma);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &i in rows {
        for &j in cols {
            out.push((-g * d.get(i, j)).exp());
        }
    }
    out
}

fn kernel_square<F: Real>(d: &DistanceMatrix<F>, gamma: f64, idx: &[usize]) -> SquareMatrix<F> {
    let vals = kernel_rect(d, gamma, idx, idx);
    SquareMatrix::from_vec(idx.len(), vals).expect("rectangle is square")
}

fn validate_train_labels<F: Real>(labels: &TaskLabels<F>, context: &str) -> Result<()> {
    match labels {
        TaskLabels::Svr(v) => {
            if v.len() < 2 {
                return Err(Error::validation(format!("{context}: too few regression samples")));
            }
        }
        TaskLabels::Svc(v) => {
            let pos = v.iter().filter(|&&l| l == 1).count();
            if pos == 0 || pos == v.len() {
                let missing = if pos == 0 { "+1" } else { "-1" };
                return Err(Error::validation(format!(
                    "{context}: stratification left no class {missing} samples"
                )));
            }
        }
        TaskLabels::Survival(v) => {
            if comparable_pairs(v).is_empty() {
                return Err(Error::validation(format!("{context}: no comparable survival pairs")));
            }
        }
    }
    Ok(())
}

/// Fits one candidate on `train_idx` and scores `eval_idx`, returning the
/// task metric on the evaluation slice.
fn fit_then_score<F: Real>(
    d: &DistanceMatrix<F>,
    labels: &TaskLabels<F>,
    point: &GridPoint,
    train_idx: &[usize],
    eval_idx: &[usize],
) -> Result<(f64, Vec<F>, f64)> {
    let gamma = point.gamma.resolve(d, train_idx);
    let k_train = kernel_square(d, gamma, train_idx);
    let train_labels = labels.select(train_idx);
    validate_train_labels(&train_labels, "training split")?;

    let (coefficients, bias) = match &train_labels {
        TaskLabels::Svr(y) => {
            let c = F::from_f64_lossy(point.c);
            let eps = F::from_f64_lossy(point.epsilon);
            let fit = fit_svr(&k_train, y, c, eps)?;
            (fit.coefficients, Some(fit.bias))
        }
        TaskLabels::Svc(y) => {
            let c = F::from_f64_lossy(point.c);
            let fit = fit_svc(&k_train, y, c)?;
            (fit.coefficients, Some(fit.bias))
        }
        TaskLabels::Survival(records) => {
            let fit = fit_survival(&k_train, records, F::from_f64_lossy(point.alpha))?;
            (fit.coefficients, None)
        }
    };

    let k_cross = kernel_rect(d, gamma, train_idx, eval_idx);
    let scores = crate::machines::predict_rect(&coefficients, bias, &k_cross, eval_idx.len())?;
    let metric = score_metric(labels, eval_idx, &scores)?;
    Ok((metric, scores, gamma))
}

fn score_metric<F: Real>(labels: &TaskLabels<F>, eval_idx: &[usize], scores: &[F]) -> Result<f64> {
    match labels {
        TaskLabels::Svr(y) => {
            let truth: Vec<F> = eval_idx.iter().map(|&i| y[i]).collect();
            let (rho, _) = spearman(&truth, scores)?;
            Ok(rho.as_f64())
        }
        TaskLabels::Svc(y) => {
            let truth: Vec<u8> = eval_idx.iter().map(|&i| (y[i] == 1) as u8).collect();
            let (auc, _) = auc_roc(&truth, scores)?;
            Ok(auc)
        }
        TaskLabels::Survival(records) => {
            let truth: Vec<SurvivalRecord> = eval_idx.iter().map(|&i| records[i].clone()).collect();
            concordance_index(&truth, scores)
        }
    }
}

/// Objective minimized by the tuner: negative validation metric, plus alpha
/// for survival models so the search favors stronger regularization.
fn tuning_objective(task: TaskKind, metric: f64, point: &GridPoint) -> f64 {
    match task {
        TaskKind::Survival => -metric + point.alpha,
        _ => -metric,
    }
}

/// Deterministic grid search: evaluates every candidate with `objective`
/// (smaller is better) and returns the argmin, breaking near-ties (within
/// 1e-12) toward the more regularized candidate. Candidates whose
/// evaluation fails are skipped; if all fail the last error is returned.
pub fn tune(grid: &[GridPoint], mut objective: impl FnMut(&GridPoint) -> Result<f64>) -> Result<(GridPoint, f64)> {
    if grid.is_empty() {
        return Err(Error::validation("hyperparameter grid is empty"));
    }
    let mut best: Option<(GridPoint, f64)> = None;
    let mut last_err: Option<Error> = None;
    for point in grid {
        match objective(point) {
            Ok(value) => {
                let better = match &best {
                    None => true,
                    Some((bp, bv)) => {
                        if (value - bv).abs() <= 1e-12 {
                            point.more_regularized_than(bp)
                        } else {
                            value < *bv
                        }
                    }
                };
                if better {
                    best = Some((*point, value));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| match last_err {
        Some(e) => Error::validation(format!("all grid candidates failed to train: {e}")),
        None => Error::validation("all grid candidates failed to train"),
    })
}

/// Patient-grouped, optionally stratified k-fold evaluation over a
/// precomputed distance matrix.
pub fn cross_validate<F: Real>(
    d: &DistanceMatrix<F>,
    patients: &[String],
    labels: &TaskLabels<F>,
    cfg: &CvConfig,
) -> Result<FoldResults<F>> {
    let n = d.n();
    if patients.len() != n || labels.len() != n {
        return Err(Error::validation("patients and labels must align with the distance matrix"));
    }
    if cfg.folds < 2 {
        return Err(Error::validation("cross-validation needs at least 2 folds"));
    }
    if !(0.0..1.0).contains(&cfg.val_frac) {
        return Err(Error::validation("val_frac must lie in [0, 1)"));
    }
    let strata = labels.strata();
    let groups = build_groups(patients, &strata, cfg.group_by_patient);
    if groups.len() < cfg.folds {
        return Err(Error::validation(format!(
            "{} patient groups cannot fill {} folds",
            groups.len(),
            cfg.folds
        )));
    }
    if cfg.stratify {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for g in &groups {
            *counts.entry(g.stratum).or_default() += 1;
        }
        for (stratum, count) in &counts {
            if *count < 2 {
                return Err(Error::validation(format!(
                    "stratification infeasible: stratum {stratum} has only {count} patient group"
                )));
            }
        }
    }
    let assignment = assign_folds(&groups, cfg.folds, cfg.stratify, cfg.seed);

    let task = labels.task();
    let fold_ids: Vec<usize> = (0..cfg.folds).collect();
    let outcomes: Result<Vec<FoldOutcome<F>>> = fold_ids
        .par_iter()
        .map(|&fold| {
            let test_groups: Vec<usize> =
                (0..groups.len()).filter(|&g| assignment[g] == fold).collect();
            let train_groups: Vec<usize> =
                (0..groups.len()).filter(|&g| assignment[g] != fold).collect();
            let test_idx: Vec<usize> =
                test_groups.iter().flat_map(|&g| groups[g].indices.iter().copied()).collect();
            let train_idx: Vec<usize> =
                train_groups.iter().flat_map(|&g| groups[g].indices.iter().copied()).collect();
            if test_idx.is_empty() || train_idx.is_empty() {
                return Err(Error::validation(format!("fold {fold} is empty")));
            }

            let chosen = if cfg.grid.len() > 1 && cfg.val_frac > 0.0 {
                let (keep, val) = carve_validation(
                    &groups,
                    &train_groups,
                    cfg.val_frac,
                    cfg.stratify,
                    derive_seed(cfg.seed, fold as u64 + 1),
                );
                let sub_idx: Vec<usize> =
                    keep.iter().flat_map(|&g| groups[g].indices.iter().copied()).collect();
                let val_idx: Vec<usize> =
                    val.iter().flat_map(|&g| groups[g].indices.iter().copied()).collect();
                if val_idx.is_empty() || sub_idx.is_empty() {
                    return Err(Error::validation(format!(
                        "fold {fold}: validation carve left an empty split"
                    )));
                }
                let (point, _) = tune(&cfg.grid, |p| {
                    fit_then_score(d, labels, p, &sub_idx, &val_idx).map(|(m, _, _)| tuning_objective(task, m, p))
                })?;
                point
            } else {
                cfg.grid.first().copied().ok_or_else(|| Error::validation("hyperparameter grid is empty"))?
            };

            let (metric, predictions, gamma) = fit_then_score(d, labels, &chosen, &train_idx, &test_idx)?;
            Ok(FoldOutcome {
                fold,
                test_ids: test_idx.iter().map(|&i| d.ids[i].clone()).collect(),
                predictions,
                metric,
                chosen,
                gamma,
            })
        })
        .collect();
    let outcomes = outcomes?;

    let mean = outcomes.iter().map(|o| o.metric).sum::<f64>() / outcomes.len() as f64;
    let sd = if outcomes.len() > 1 {
        (outcomes.iter().map(|o| (o.metric - mean).powi(2)).sum::<f64>() / (outcomes.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(FoldResults { task, metric_name: metric_name(task), folds: outcomes, mean, sd })
}

/// Picks a grid candidate by tuning on a stratified validation carve of the
/// whole dataset; with a single-point grid (or no carve) that point wins.
pub fn tune_on_carve<F: Real>(
    d: &DistanceMatrix<F>,
    patients: &[String],
    labels: &TaskLabels<F>,
    cfg: &CvConfig,
) -> Result<GridPoint> {
    if cfg.grid.is_empty() {
        return Err(Error::validation("hyperparameter grid is empty"));
    }
    if cfg.grid.len() == 1 || cfg.val_frac == 0.0 {
        return Ok(cfg.grid[0]);
    }
    let strata = labels.strata();
    let groups = build_groups(patients, &strata, cfg.group_by_patient);
    let all: Vec<usize> = (0..groups.len()).collect();
    let (keep, val) = carve_validation(&groups, &all, cfg.val_frac, cfg.stratify, derive_seed(cfg.seed, 0));
    let sub_idx: Vec<usize> = keep.iter().flat_map(|&g| groups[g].indices.iter().copied()).collect();
    let val_idx: Vec<usize> = val.iter().flat_map(|&g| groups[g].indices.iter().copied()).collect();
    if val_idx.is_empty() || sub_idx.is_empty() {
        return Err(Error::validation("validation carve left an empty split"));
    }
    let task = labels.task();
    let (point, _) = tune(&cfg.grid, |p| {
        fit_then_score(d, labels, p, &sub_idx, &val_idx).map(|(m, _, _)| tuning_objective(task, m, p))
    })?;
    Ok(point)
}

/// Trains a deployable model on the given samples and wraps it with the
/// kernel fingerprint it must be scored against.
pub fn train_model<F: Real>(
    d: &DistanceMatrix<F>,
    labels: &TaskLabels<F>,
    idx: &[usize],
    point: &GridPoint,
) -> Result<DualModel<F>> {
    let gamma = point.gamma.resolve(d, idx);
    let k_train = kernel_square(d, gamma, idx);
    let selected = labels.select(idx);
    validate_train_labels(&selected, "training set")?;
    let mut hyperparams = BTreeMap::new();
    hyperparams.insert("gamma".to_string(), gamma);
    hyperparams.insert("sigma".to_string(), d.sigma);
    let (task, coefficients, bias) = match &selected {
        TaskLabels::Svr(y) => {
            hyperparams.insert("C".to_string(), point.c);
            hyperparams.insert("epsilon".to_string(), point.epsilon);
            let fit = fit_svr(&k_train, y, F::from_f64_lossy(point.c), F::from_f64_lossy(point.epsilon))?;
            (TaskKind::Svr, fit.coefficients, Some(fit.bias))
        }
        TaskLabels::Svc(y) => {
            hyperparams.insert("C".to_string(), point.c);
            let fit = fit_svc(&k_train, y, F::from_f64_lossy(point.c))?;
            (TaskKind::Svc, fit.coefficients, Some(fit.bias))
        }
        TaskLabels::Survival(records) => {
            hyperparams.insert("alpha".to_string(), point.alpha);
            let fit = fit_survival(&k_train, records, F::from_f64_lossy(point.alpha))?;
            (TaskKind::Survival, fit.coefficients, None)
        }
    };
    Ok(DualModel {
        task,
        train_ids: idx.iter().map(|&i| d.ids[i].clone()).collect(),
        coefficients,
        bias,
        hyperparams,
        kernel: KernelFingerprint {
            sigma: Some(d.sigma),
            gamma: Some(gamma),
            estimator: Some(d.estimator.clone()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_distance(n: usize, spread: f64) -> DistanceMatrix<f64> {
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = ((i as f64 - j as f64) * spread).abs();
                    m.set(i, j, v);
                }
            }
        }
        DistanceMatrix::new((0..n).map(|i| format!("s{i}")).collect(), m, 10.0, "biased").unwrap()
    }

    #[test]
    fn ten_patients_five_folds_two_each() {
        let patients: Vec<String> = (0..10).map(|i| format!("P{i}")).collect();
        let strata = vec![0i64; 10];
        let groups = build_groups(&patients, &strata, true);
        let assignment = assign_folds(&groups, 5, false, 42);
        let mut counts = vec![0usize; 5];
        for &f in &assignment {
            counts[f] += 1;
        }
        assert_eq!(counts, vec![2, 2, 2, 2, 2]);
    }

    #[test]
    fn same_seed_same_assignment() {
        let patients: Vec<String> = (0..12).map(|i| format!("P{}", i % 7)).collect();
        let strata: Vec<i64> = (0..12).map(|i| (i % 2) as i64).collect();
        let groups = build_groups(&patients, &strata, true);
        let a = assign_folds(&groups, 3, true, 99);
        let b = assign_folds(&groups, 3, true, 99);
        assert_eq!(a, b);
        let c = assign_folds(&groups, 3, true, 100);
        assert!(a != c || groups.len() <= 3, "different seeds should usually differ");
    }

    #[test]
    fn folds_partition_and_respect_patients() {
        let n = 20;
        let d = toy_distance(n, 0.3);
        let patients: Vec<String> = (0..n).map(|i| format!("P{}", i / 2)).collect();
        let labels = TaskLabels::Svr((0..n).map(|i| i as f64 * 0.1).collect());
        let mut cfg = CvConfig::new(TaskKind::Svr, 5, 0.0, 7);
        cfg.grid = vec![GridPoint { c: 10.0, epsilon: 0.01, alpha: 0.0, gamma: GammaRule::MedianTimes(1.0) }];
        let results = cross_validate(&d, &patients, &labels, &cfg).unwrap();

        let mut seen: Vec<String> = Vec::new();
        for fold in &results.folds {
            for id in &fold.test_ids {
                assert!(!seen.contains(id), "sample {id} in two folds");
                seen.push(id.clone());
            }
            // Both bags of each patient land in the same fold.
            for id in &fold.test_ids {
                let i: usize = id[1..].parse().unwrap();
                let partner = if i % 2 == 0 { i + 1 } else { i - 1 };
                assert!(fold.test_ids.contains(&format!("s{partner}")));
            }
        }
        assert_eq!(seen.len(), n);
    }

    #[test]
    fn tune_single_point_and_tie_break() {
        let grid = vec![GridPoint { c: 1.0, epsilon: 0.1, alpha: 0.0, gamma: GammaRule::MedianTimes(1.0) }];
        let (best, v) = tune(&grid, |_| Ok(0.5)).unwrap();
        assert_eq!(best.c, 1.0);
        assert_eq!(v, 0.5);

        // Equal objectives: the smaller-C candidate wins.
        let grid = vec![
            GridPoint { c: 10.0, epsilon: 0.1, alpha: 0.0, gamma: GammaRule::MedianTimes(1.0) },
            GridPoint { c: 0.1, epsilon: 0.1, alpha: 0.0, gamma: GammaRule::MedianTimes(1.0) },
        ];
        let (best, _) = tune(&grid, |_| Ok(1.0)).unwrap();
        assert_eq!(best.c, 0.1);

        // Larger alpha wins ties for survival-style grids.
        let grid = vec![
            GridPoint { c: 0.0, epsilon: 0.0, alpha: 0.001, gamma: GammaRule::MedianTimes(1.0) },
            GridPoint { c: 0.0, epsilon: 0.0, alpha: 0.0625, gamma: GammaRule::MedianTimes(1.0) },
        ];
        let (best, _) = tune(&grid, |_| Ok(-0.7)).unwrap();
        assert_eq!(best.alpha, 0.0625);
    }

    #[test]
    fn tune_all_failures_is_an_error() {
        let grid = GridPoint::default_grid(TaskKind::Svc);
        let err = tune(&grid, |_| Err(Error::validation("nope"))).unwrap_err();
        assert!(err.to_string().contains("failed to train"));
    }

    #[test]
    fn alpha_sweep_spans_the_stated_range() {
        let sweep = GridPoint::alpha_sweep();
        assert_eq!(sweep.len(), 13);
        assert!((sweep[0].alpha - 2f64.powi(-12)).abs() < 1e-15);
        assert!((sweep[12].alpha - 0.125).abs() < 1e-15);
        for w in sweep.windows(2) {
            let ratio = w[1].alpha / w[0].alpha;
            assert!((ratio - 2f64.powf(0.75)).abs() < 1e-12, "not log-spaced");
        }
    }

    #[test]
    fn stratified_survival_needs_two_groups_per_stratum() {
        let n = 8;
        let d = toy_distance(n, 0.2);
        let patients: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
        let mut records: Vec<SurvivalRecord> =
            (0..n).map(|i| SurvivalRecord::new(format!("P{i}"), 1.0 + i as f64, true).unwrap()).collect();
        records[0].event = false; // exactly one censored group
        let labels = TaskLabels::<f64>::Survival(records);
        let cfg = CvConfig::new(TaskKind::Survival, 2, 0.0, 1);
        let err = cross_validate(&d, &patients, &labels, &cfg).unwrap_err();
        assert!(err.to_string().contains("stratification infeasible"), "{err}");
    }
}
