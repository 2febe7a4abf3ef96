//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! implicit QL with shifts. Computation is fixed at f64 regardless of the
//! caller's scalar; eigenvalue extraction is a validation step, not part of
//! the deterministic kernel pipeline.

use crate::error::{Error, Result};

/// Reduces a symmetric matrix (row-major, order `n`) to tridiagonal form.
/// Returns (diagonal, subdiagonal) with the subdiagonal in `e[1..]`.
fn tridiagonalize(n: usize, a: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let at = |a: &[f64], i: usize, j: usize| a[i * n + j];

    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| at(a, i, k).abs()).sum();
            if scale == 0.0 {
                e[i] = at(a, i, l);
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += at(a, i, k) * at(a, i, k);
                }
                let f = at(a, i, l);
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += at(a, j, k) * at(a, i, k);
                    }
                    for k in (j + 1)..=l {
                        g += at(a, k, j) * at(a, i, k);
                    }
                    e[j] = g / h;
                    f_acc += e[j] * at(a, i, j);
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = at(a, i, j);
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j * n + k] -= f * e[k] + g * at(a, i, k);
                    }
                }
            }
        } else {
            e[i] = at(a, i, l);
        }
        d[i] = h;
    }
    e[0] = 0.0;
    for i in 0..n {
        d[i] = at(a, i, i);
    }
    (d, e)
}

/// Implicit QL with Wilkinson-style shifts on a tridiagonal matrix.
/// `d` holds the diagonal, `e[1..]` the subdiagonal; on success `d`
/// holds the eigenvalues (unsorted).
fn ql_implicit(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() + dd == dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::NoConvergence {
                    context: "symmetric eigensolver QL sweep".into(),
                    residual: e[l].abs(),
                    iterations: iter,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            let mut underflowed = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflowed {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix given row-major, ascending order.
pub(crate) fn symmetric_eigenvalues(n: usize, matrix: &[f64]) -> Result<Vec<f64>> {
    debug_assert_eq!(matrix.len(), n * n);
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![matrix[0]]);
    }
    let mut a = matrix.to_vec();
    let (mut d, mut e) = tridiagonalize(n, &mut a);
    ql_implicit(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    Ok(d)
}
