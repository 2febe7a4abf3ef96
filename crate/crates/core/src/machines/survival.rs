//! Ranking-based survival model over a precomputed kernel.
//!
//! The model predicts a risk score `f = K beta` and minimizes the convex
//! squared-hinge ranking objective
//!
//! ```text
//! R(beta) = alpha/2 * beta' K beta
//!         + 1/2 * sum_{(i,j) in P} max(0, 1 - (f_i - f_j))^2
//! ```
//!
//! over the comparable pairs `P = {(i, j) : T_i < T_j, event_i = 1}`. Higher
//! scores mean higher risk. The objective is invariant to a shared intercept,
//! so the model carries no bias. Pairs are enumerated exactly; optimization
//! is limited-memory quasi-Newton with Armijo backtracking.

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Regularization weight used when none is tuned.
pub const DEFAULT_ALPHA: f64 = 0.0625;
/// Censoring horizon in years; later events are censored at this time.
pub const DEFAULT_CENSOR_YEARS: f64 = 10.0;

/// One patient's follow-up: time in years and whether the event occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub patient_id: String,
    pub time: f64,
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(patient_id: impl Into<String>, time: f64, event: bool) -> Result<Self> {
        if !(time > 0.0) || !time.is_finite() {
            return Err(Error::validation(format!("survival time must be positive, got {time}")));
        }
        Ok(SurvivalRecord { patient_id: patient_id.into(), time, event })
    }

    /// Applies the censoring horizon: observations beyond it are cut to the
    /// horizon and marked censored.
    pub fn truncated(&self, horizon: f64) -> SurvivalRecord {
        if self.time > horizon {
            SurvivalRecord { patient_id: self.patient_id.clone(), time: horizon, event: false }
        } else {
            self.clone()
        }
    }
}

/// All `(i, j)` with `T_i < T_j` and an event at `i`.
pub fn comparable_pairs(records: &[SurvivalRecord]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, a) in records.iter().enumerate() {
        if !a.event {
            continue;
        }
        for (j, b) in records.iter().enumerate() {
            if a.time < b.time {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Objective value and gradient of the ranking objective at `beta`.
pub fn survival_objective<F: Real>(
    kernel: &SquareMatrix<F>,
    pairs: &[(usize, usize)],
    alpha: F,
    beta: &[F],
) -> (F, Vec<F>) {
    let n = beta.len();
    let half = F::from_f64_lossy(0.5);

    // f = K beta
    let mut f = vec![F::zero(); n];
    for i in 0..n {
        let row = kernel.row(i);
        let mut s = F::zero();
        for (k, b) in row.iter().zip(beta) {
            s = s + *k * *b;
        }
        f[i] = s;
    }

    let mut loss = F::zero();
    let mut g = vec![F::zero(); n];
    for &(i, j) in pairs {
        let h = F::one() - (f[i] - f[j]);
        if h > F::zero() {
            loss = loss + h * h;
            g[i] = g[i] - h;
            g[j] = g[j] + h;
        }
    }
    loss = loss * half;

    let mut reg = F::zero();
    for (b, fi) in beta.iter().zip(&f) {
        reg = reg + *b * *fi;
    }
    let value = half * alpha * reg + loss;

    // grad = alpha * f + K g
    let mut grad = vec![F::zero(); n];
    for i in 0..n {
        let row = kernel.row(i);
        let mut s = F::zero();
        for (k, gv) in row.iter().zip(&g) {
            s = s + *k * *gv;
        }
        grad[i] = alpha * f[i] + s;
    }
    (value, grad)
}

/// A trained survival ranking fit.
#[derive(Debug, Clone)]
pub struct SurvivalFit<F> {
    /// Dual coefficients beta; risk of a query is `sum_i beta_i K(i, q)`.
    pub coefficients: Vec<F>,
    pub iterations: usize,
    pub gradient_norm: F,
    /// Objective after each accepted step (nonincreasing).
    pub objective_trace: Vec<F>,
}

fn norm2<F: Real>(v: &[F]) -> F {
    v.iter().map(|&x| x * x).sum::<F>().sqrt()
}

/// Fits the ranking model. Errors when no comparable pair exists.
pub fn fit_survival<F: Real>(kernel: &SquareMatrix<F>, records: &[SurvivalRecord], alpha: F) -> Result<SurvivalFit<F>> {
    if kernel.n() != records.len() {
        return Err(Error::validation(format!(
            "kernel of order {} does not match {} survival records",
            kernel.n(),
            records.len()
        )));
    }
    if !(alpha > F::zero()) {
        return Err(Error::validation("alpha must be positive"));
    }
    let pairs = comparable_pairs(records);
    if pairs.is_empty() {
        return Err(Error::validation(
            "no comparable pair (some T_i < T_j with an event at i) exists",
        ));
    }
    let tol = F::from_f64_lossy(1e-6) * F::from_usize(pairs.len()).unwrap();
    let eval = |beta: &[F]| survival_objective(kernel, &pairs, alpha, beta);
    lbfgs(records.len(), eval, tol, 50_000)
}

/// Limited-memory BFGS with Armijo backtracking, memory 10.
fn lbfgs<F: Real>(
    n: usize,
    eval: impl Fn(&[F]) -> (F, Vec<F>),
    grad_tol: F,
    max_iter: usize,
) -> Result<SurvivalFit<F>> {
    const MEMORY: usize = 10;
    let mut x = vec![F::zero(); n];
    let (mut value, mut grad) = eval(&x);
    let mut trace = vec![value];
    let mut s_list: Vec<Vec<F>> = Vec::new();
    let mut y_list: Vec<Vec<F>> = Vec::new();
    let c1 = F::from_f64_lossy(1e-4);

    for iteration in 0..max_iter {
        let gnorm = norm2(&grad);
        if gnorm <= grad_tol {
            return Ok(SurvivalFit { coefficients: x, iterations: iteration, gradient_norm: gnorm, objective_trace: trace });
        }

        // Two-loop recursion for d = -H grad.
        let mut q = grad.clone();
        let m = s_list.len();
        let mut a = vec![F::zero(); m];
        let mut rho = vec![F::zero(); m];
        for k in (0..m).rev() {
            let sy: F = s_list[k].iter().zip(&y_list[k]).map(|(&s, &y)| s * y).sum();
            rho[k] = F::one() / sy;
            let sq: F = s_list[k].iter().zip(&q).map(|(&s, &qq)| s * qq).sum();
            a[k] = rho[k] * sq;
            for (qq, &y) in q.iter_mut().zip(&y_list[k]) {
                *qq = *qq - a[k] * y;
            }
        }
        if m > 0 {
            let last = m - 1;
            let sy: F = s_list[last].iter().zip(&y_list[last]).map(|(&s, &y)| s * y).sum();
            let yy: F = y_list[last].iter().map(|&y| y * y).sum();
            let gamma = sy / yy;
            for qq in q.iter_mut() {
                *qq = *qq * gamma;
            }
        }
        for k in 0..m {
            let yq: F = y_list[k].iter().zip(&q).map(|(&y, &qq)| y * qq).sum();
            let b = rho[k] * yq;
            for (qq, &s) in q.iter_mut().zip(&s_list[k]) {
                *qq = *qq + (a[k] - b) * s;
            }
        }
        let mut direction: Vec<F> = q.iter().map(|&v| -v).collect();
        let mut slope: F = direction.iter().zip(&grad).map(|(&d, &g)| d * g).sum();
        if !(slope < F::zero()) {
            direction = grad.iter().map(|&g| -g).collect();
            slope = -gnorm * gnorm;
        }

        // Armijo backtracking.
        let mut step = F::one();
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<F> = x.iter().zip(&direction).map(|(&xi, &d)| xi + step * d).collect();
            let (cv, cg) = eval(&candidate);
            if cv <= value + c1 * step * slope {
                accepted = Some((candidate, cv, cg));
                break;
            }
            step = step * F::from_f64_lossy(0.5);
        }
        let (new_x, new_value, new_grad) = match accepted {
            Some(t) => t,
            None => {
                // Line search stalled at numerical precision; report as
                // converged only if the gradient criterion nearly holds.
                return Err(Error::NoConvergence {
                    context: "survival line search".into(),
                    residual: gnorm.as_f64(),
                    iterations: iteration,
                });
            }
        };

        let s: Vec<F> = new_x.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let yv: Vec<F> = new_grad.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        let sy: F = s.iter().zip(&yv).map(|(&a, &b)| a * b).sum();
        let curvature_floor = F::from_f64_lossy(1e-10) * norm2(&s) * norm2(&yv);
        if sy > curvature_floor {
            s_list.push(s);
            y_list.push(yv);
            if s_list.len() > MEMORY {
                s_list.remove(0);
                y_list.remove(0);
            }
        }
        x = new_x;
        value = new_value;
        grad = new_grad;
        trace.push(value);
    }

    let gnorm = norm2(&grad);
    if gnorm <= grad_tol {
        Ok(SurvivalFit { coefficients: x, iterations: max_iter, gradient_norm: gnorm, objective_trace: trace })
    } else {
        Err(Error::NoConvergence {
            context: "survival ranking solver".into(),
            residual: gnorm.as_f64(),
            iterations: max_iter,
        })
    }
}
