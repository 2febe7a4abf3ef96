//! Sequential minimal optimization for the shared SVM dual form
//!
//! ```text
//! min  1/2 a' Q a + p' a    s.t.  y' a = 0,  0 <= a_t <= C
//! ```
//!
//! with `Q_ij = y_i y_j K(b(i), b(j))`. Classification uses one variable per
//! sample; regression doubles the variables (`a` and `a*` blocks) over the
//! same base kernel. Working pairs are chosen by the second-order rule
//! (steepest feasible direction for `i`, largest guaranteed decrease for
//! `j`); the stopping criterion is the KKT gap `m(a) - M(a) <= tol`.

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::Real;

/// Solver tolerance on the KKT gap.
pub const KKT_TOL: f64 = 1e-6;

struct DualProblem<'a, F: Real> {
    kernel: &'a SquareMatrix<F>,
    y: Vec<F>,
    p: Vec<F>,
    c: F,
}

impl<F: Real> DualProblem<'_, F> {
    fn len(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn base(&self, i: usize) -> usize {
        i % self.kernel.n()
    }

    #[inline]
    fn k(&self, i: usize, j: usize) -> F {
        self.kernel.get(self.base(i), self.base(j))
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> F {
        self.y[i] * self.y[j] * self.k(i, j)
    }
}

struct SmoState<F> {
    alpha: Vec<F>,
    gradient: Vec<F>,
    objective_trace: Vec<F>,
}

/// Raw solver output in the doubled variable space.
struct SmoSolution<F> {
    alpha: Vec<F>,
    rho: F,
    iterations: usize,
    gap: F,
    objective: F,
    objective_trace: Vec<F>,
}

fn solve<F: Real>(problem: &DualProblem<'_, F>, tol: F, max_iter: usize) -> Result<SmoSolution<F>> {
    let l = problem.len();
    let mut state = SmoState {
        alpha: vec![F::zero(); l],
        gradient: problem.p.clone(),
        objective_trace: Vec::new(),
    };
    let tau = F::from_f64_lossy(1e-12);

    let objective = |s: &SmoState<F>| -> F {
        let half = F::from_f64_lossy(0.5);
        let mut obj = F::zero();
        for t in 0..l {
            obj = obj + s.alpha[t] * (s.gradient[t] + problem.p[t]);
        }
        obj * half
    };

    let mut iterations = 0;
    let mut gap;
    loop {
        // m(a) = max over I_up of -y g; M(a) = min over I_low of -y g.
        let mut m_up = F::neg_infinity();
        let mut i_up: Option<usize> = None;
        let mut m_low = F::infinity();
        for t in 0..l {
            let v = -problem.y[t] * state.gradient[t];
            let positive = problem.y[t] > F::zero();
            let in_up = if positive { state.alpha[t] < problem.c } else { state.alpha[t] > F::zero() };
            let in_low = if positive { state.alpha[t] > F::zero() } else { state.alpha[t] < problem.c };
            if in_up && v >= m_up {
                m_up = v;
                i_up = Some(t);
            }
            if in_low && v <= m_low {
                m_low = v;
            }
        }
        gap = m_up - m_low;
        let i = match i_up {
            Some(i) if gap > tol => i,
            _ => break,
        };

        // Second-order choice of j: maximal guaranteed decrease.
        let mut best: Option<(F, usize)> = None;
        for t in 0..l {
            let positive = problem.y[t] > F::zero();
            let in_low = if positive { state.alpha[t] > F::zero() } else { state.alpha[t] < problem.c };
            if !in_low {
                continue;
            }
            let v = -problem.y[t] * state.gradient[t];
            let grad_diff = m_up - v;
            if grad_diff <= F::zero() {
                continue;
            }
            let eta = (problem.k(i, i) + problem.k(t, t) - (problem.k(i, t) + problem.k(i, t))).max(tau);
            let decrease = grad_diff * grad_diff / eta;
            if best.map_or(true, |(d, _)| decrease > d) {
                best = Some((decrease, t));
            }
        }
        let j = match best {
            Some((_, j)) => j,
            None => break,
        };

        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                context: "SMO dual solver".into(),
                residual: gap.as_f64(),
                iterations,
            });
        }
        iterations += 1;

        // Two-variable update with exact box clipping.
        let old_i = state.alpha[i];
        let old_j = state.alpha[j];
        let c = problem.c;
        if problem.y[i] != problem.y[j] {
            let quad = (problem.q(i, i) + problem.q(j, j) + (problem.q(i, j) + problem.q(i, j))).max(tau);
            let delta = (-state.gradient[i] - state.gradient[j]) / quad;
            let diff = old_i - old_j;
            state.alpha[i] = old_i + delta;
            state.alpha[j] = old_j + delta;
            if diff > F::zero() {
                if state.alpha[j] < F::zero() {
                    state.alpha[j] = F::zero();
                    state.alpha[i] = diff;
                }
            } else if state.alpha[i] < F::zero() {
                state.alpha[i] = F::zero();
                state.alpha[j] = -diff;
            }
            if diff > F::zero() {
                if state.alpha[i] > c {
                    state.alpha[i] = c;
                    state.alpha[j] = c - diff;
                }
            } else if state.alpha[j] > c {
                state.alpha[j] = c;
                state.alpha[i] = c + diff;
            }
        } else {
            let quad = (problem.q(i, i) + problem.q(j, j) - (problem.q(i, j) + problem.q(i, j))).max(tau);
            let delta = (state.gradient[i] - state.gradient[j]) / quad;
            let sum = old_i + old_j;
            state.alpha[i] = old_i - delta;
            state.alpha[j] = old_j + delta;
            if sum > c {
                if state.alpha[i] > c {
                    state.alpha[i] = c;
                    state.alpha[j] = sum - c;
                }
            } else if state.alpha[j] < F::zero() {
                state.alpha[j] = F::zero();
                state.alpha[i] = sum;
            }
            if sum > c {
                if state.alpha[j] > c {
                    state.alpha[j] = c;
                    state.alpha[i] = sum - c;
                }
            } else if state.alpha[i] < F::zero() {
                state.alpha[i] = F::zero();
                state.alpha[j] = sum;
            }
        }

        let delta_i = state.alpha[i] - old_i;
        let delta_j = state.alpha[j] - old_j;
        for t in 0..l {
            state.gradient[t] = state.gradient[t] + problem.q(t, i) * delta_i + problem.q(t, j) * delta_j;
        }
        state.objective_trace.push(objective(&state));
    }

    // Intercept from the KKT conditions at the solution.
    let mut n_free = 0usize;
    let mut sum_free = F::zero();
    let mut ub = F::infinity();
    let mut lb = F::neg_infinity();
    for t in 0..l {
        let yg = problem.y[t] * state.gradient[t];
        let positive = problem.y[t] > F::zero();
        if state.alpha[t] >= problem.c {
            if positive {
                lb = lb.max(yg);
            } else {
                ub = ub.min(yg);
            }
        } else if state.alpha[t] <= F::zero() {
            if positive {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / F::from_usize(n_free).unwrap()
    } else {
        (ub + lb) * F::from_f64_lossy(0.5)
    };

    let final_objective = objective(&state);
    Ok(SmoSolution {
        alpha: state.alpha,
        rho,
        iterations,
        gap,
        objective: final_objective,
        objective_trace: state.objective_trace,
    })
}

/// Coefficients, intercept and solve diagnostics of an SVM fit.
#[derive(Debug, Clone)]
pub struct SmoFit<F> {
    /// Signed dual coefficients, one per training sample.
    pub coefficients: Vec<F>,
    pub bias: F,
    pub iterations: usize,
    /// KKT gap at exit.
    pub gap: F,
    /// Dual objective at exit.
    pub objective: F,
    /// Dual objective after each two-variable update (nonincreasing).
    pub objective_trace: Vec<F>,
}

fn validate_kernel_for<F: Real>(kernel: &SquareMatrix<F>, samples: usize) -> Result<()> {
    if kernel.n() != samples {
        return Err(Error::validation(format!(
            "kernel of order {} does not match {samples} training samples",
            kernel.n()
        )));
    }
    if !kernel.is_symmetric() {
        return Err(Error::validation("training kernel must be symmetric"));
    }
    Ok(())
}

/// Epsilon-insensitive support vector regression on a precomputed kernel.
///
/// Coefficients land in `[-C, C]` and sum to zero; predictions are
/// `f(q) = sum coef_i K(i, q) + bias`.
pub fn fit_svr<F: Real>(kernel: &SquareMatrix<F>, targets: &[F], c: F, epsilon: F) -> Result<SmoFit<F>> {
    validate_kernel_for(kernel, targets.len())?;
    if targets.is_empty() {
        return Err(Error::validation("cannot fit a regressor on zero samples"));
    }
    if !(c > F::zero()) {
        return Err(Error::validation("C must be positive"));
    }
    if epsilon < F::zero() {
        return Err(Error::validation("epsilon must be nonnegative"));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::validation("regression targets must be finite"));
    }
    let n = targets.len();
    let mut y = vec![F::one(); 2 * n];
    let mut p = vec![F::zero(); 2 * n];
    for i in 0..n {
        y[n + i] = -F::one();
        p[i] = epsilon - targets[i];
        p[n + i] = epsilon + targets[i];
    }
    let problem = DualProblem { kernel, y, p, c };
    let solution = solve(&problem, F::from_f64_lossy(KKT_TOL), smo_iteration_cap(2 * n))?;
    let coefficients: Vec<F> = (0..n).map(|i| solution.alpha[i] - solution.alpha[n + i]).collect();
    Ok(SmoFit {
        coefficients,
        bias: -solution.rho,
        iterations: solution.iterations,
        gap: solution.gap,
        objective: solution.objective,
        objective_trace: solution.objective_trace,
    })
}

/// Soft-margin binary SVM on a precomputed kernel; labels are -1/+1.
///
/// Coefficients are the signed duals `y_i a_i`, bounded by `C` in magnitude
/// and summing to zero.
pub fn fit_svc<F: Real>(kernel: &SquareMatrix<F>, labels: &[i8], c: F) -> Result<SmoFit<F>> {
    validate_kernel_for(kernel, labels.len())?;
    if labels.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::validation("classification labels must be -1 or +1"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::validation("both classes must be present to fit a classifier"));
    }
    if !(c > F::zero()) {
        return Err(Error::validation("C must be positive"));
    }
    let y: Vec<F> = labels.iter().map(|&l| if l == 1 { F::one() } else { -F::one() }).collect();
    let p = vec![-F::one(); labels.len()];
    let problem = DualProblem { kernel, y: y.clone(), p, c };
    let solution = solve(&problem, F::from_f64_lossy(KKT_TOL), smo_iteration_cap(labels.len()))?;
    let coefficients: Vec<F> = solution.alpha.iter().zip(&y).map(|(&a, &yy)| a * yy).collect();
    Ok(SmoFit {
        coefficients,
        bias: -solution.rho,
        iterations: solution.iterations,
        gap: solution.gap,
        objective: solution.objective,
        objective_trace: solution.objective_trace,
    })
}

fn smo_iteration_cap(l: usize) -> usize {
    (400 * l).max(200_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> SquareMatrix<f64> {
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Random unit-diagonal PSD matrix (normalized Gram of Gaussian rows).
    fn random_kernel(rng: &mut ChaCha8Rng, n: usize) -> SquareMatrix<f64> {
        let r = n + 2;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let gram = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, gram(&x[i], &x[j]) / (gram(&x[i], &x[i]) * gram(&x[j], &x[j])).sqrt());
            }
        }
        // Symmetrize the last ulp.
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m.get(i, j) + m.get(j, i));
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    #[test]
    fn svc_two_point_closed_form() {
        let fit = fit_svc(&identity(2), &[1, -1], 10.0).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-8, "{:?}", fit.coefficients);
        assert!((fit.coefficients[1] + 1.0).abs() < 1e-8);
        assert!(fit.bias.abs() < 1e-8);
    }

    #[test]
    fn svr_two_point_matches_grid_enumeration() {
        let fit = fit_svr(&identity(2), &[1.0, -1.0], 10.0, 0.0).unwrap();

        // Oracle: enumerate the equality-constrained two-variable dual on a
        // fine grid. With coef2 = -coef1 the objective is
        // coef1^2 - (z1 - z2) coef1.
        let mut best = (f64::INFINITY, 0.0);
        let mut c1 = -10.0;
        while c1 <= 10.0 {
            let obj = c1 * c1 - 2.0 * c1;
            if obj < best.0 {
                best = (obj, c1);
            }
            c1 += 1e-3;
        }
        assert!((fit.coefficients[0] - best.1).abs() < 1e-6, "{:?}", fit.coefficients);
        assert!((fit.coefficients[1] + best.1).abs() < 1e-6);
        assert!(fit.bias.abs() < 1e-8);

        // Training predictions reproduce the targets.
        let f0 = fit.coefficients[0] + fit.bias;
        let f1 = fit.coefficients[1] + fit.bias;
        assert!((f0 - 1.0).abs() < 1e-6 && (f1 + 1.0).abs() < 1e-6);
    }

    #[test]
    fn svr_constant_targets_fit_in_the_tube() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = random_kernel(&mut rng, 6);
        let fit = fit_svr(&k, &[3.25; 6], 10.0, 0.1).unwrap();
        assert!(fit.coefficients.iter().all(|c| c.abs() < 1e-12), "{:?}", fit.coefficients);
        assert!((fit.bias - 3.25).abs() < 1e-12);
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn svc_rejects_single_class() {
        assert!(fit_svc(&identity(3), &[1, 1, 1], 1.0).is_err());
    }

    #[test]
    fn svr_rejects_non_square_kernel() {
        assert!(fit_svr(&identity(3), &[1.0, 2.0], 1.0, 0.1).is_err());
    }

    #[test]
    fn dual_feasibility_at_exit() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..10 {
            let n = 5 + trial % 4;
            let k = random_kernel(&mut rng, n);
            let c = [0.5, 1.0, 10.0][trial % 3];

            let labels: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
            let fit = fit_svc(&k, &labels, c).unwrap();
            let sum: f64 = fit.coefficients.iter().sum();
            assert!(sum.abs() < 1e-8, "svc equality violated: {sum}");
            assert!(fit.coefficients.iter().all(|v| v.abs() <= c + 1e-8));

            let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let fit = fit_svr(&k, &targets, c, 0.05).unwrap();
            let sum: f64 = fit.coefficients.iter().sum();
            assert!(sum.abs() < 1e-8, "svr equality violated: {sum}");
            assert!(fit.coefficients.iter().all(|v| v.abs() <= c + 1e-8));
        }
    }

    #[test]
    fn objective_trace_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = random_kernel(&mut rng, 9);
        let targets: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fit = fit_svr(&k, &targets, 10.0, 0.01).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn separable_problem_ranks_training_scores_perfectly() {
        // Two tight clusters on the kernel diagonal blocks.
        let n = 8;
        let mut k = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let same = (i < 4) == (j < 4);
                k.set(i, j, if i == j { 1.0 } else if same { 0.9 } else { 0.05 });
            }
        }
        let labels: Vec<i8> = (0..n).map(|i| if i < 4 { 1 } else { -1 }).collect();
        let fit = fit_svc(&k, &labels, 10.0).unwrap();
        let scores: Vec<f64> = (0..n)
            .map(|q| (0..n).map(|i| fit.coefficients[i] * k.get(i, q)).sum::<f64>() + fit.bias)
            .collect();
        let min_pos = scores[..4].iter().cloned().fold(f64::INFINITY, f64::min);
        let max_neg = scores[4..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min_pos > max_neg, "training AUC below 1: {scores:?}");
    }
}
