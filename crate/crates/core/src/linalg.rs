//! Symmetric tridiagonal eigenvalues by Sturm bisection, eigenvectors by
//! inverse iteration, and a small dense solver.

use crate::error::{Error, Result};

/// Number of eigenvalues of the symmetric tridiagonal (diag, off) below sigma.
pub fn sturm_count(diag: &[f64], off: &[f64], sigma: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let o2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        d = diag[i] - sigma - if i == 0 { 0.0 } else { o2 / d };
        if d == 0.0 {
            d = -f64::EPSILON * (diag[i].abs() + sigma.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

pub fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += off[i - 1].abs();
        }
        if i + 1 < n {
            r += off[i].abs();
        }
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    (lo, hi)
}

/// The m smallest eigenvalues in increasing order, each bisected to
/// rel_tol·max(|λ|, 1e-3·spectral radius).
pub fn lowest_eigenvalues(diag: &[f64], off: &[f64], m: usize, rel_tol: f64) -> Vec<f64> {
    let m = m.min(diag.len());
    let (glo, ghi) = gershgorin(diag, off);
    let radius = glo.abs().max(ghi.abs());
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        // Smallest σ with count(σ) > k.
        let (mut lo, mut hi) = (glo, ghi);
        if let Some(&prev) = out.last() {
            lo = lo.max(prev);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sturm_count(diag, off, mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            let tol = rel_tol * (0.5 * (lo + hi)).abs().max(1e-3 * radius);
            if hi - lo <= tol {
                break;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out
}

/// Solve (T - sigma) x = b for symmetric tridiagonal T with partial pivoting.
pub fn solve_shifted_pivoting(diag: &[f64], off: &[f64], sigma: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    // Band storage of U after elimination: u0 (diag), u1, u2 (two superdiagonals).
    let mut u0: Vec<f64> = diag.iter().map(|d| d - sigma).collect();
    let mut u1: Vec<f64> = (0..n).map(|i| if i + 1 < n { off[i] } else { 0.0 }).collect();
    let mut u2 = vec![0.0; n];
    let mut lower: Vec<f64> = (0..n).map(|i| if i + 1 < n { off[i] } else { 0.0 }).collect();
    let mut x = b.to_vec();
    let tiny = f64::EPSILON * gershgorin(diag, off).1.abs().max(1.0);
    for i in 0..n.saturating_sub(1) {
        // Rows i and i+1; row i+1 is (lower[i], diag', off[i+1]).
        let a = lower[i];
        if a.abs() > u0[i].abs() {
            // Swap rows i and i+1.
            let (r0, r1, r2) = (u0[i], u1[i], u2[i]);
            let next_diag = u0[i + 1];
            let next_off = u1[i + 1];
            u0[i] = a;
            u1[i] = next_diag;
            u2[i] = next_off;
            x.swap(i, i + 1);
            let f = r0 / a;
            u0[i + 1] = r1 - f * next_diag;
            u1[i + 1] = r2 - f * next_off;
            x[i + 1] -= f * x[i];
        } else {
            if u0[i].abs() < tiny {
                u0[i] = tiny;
            }
            let f = a / u0[i];
            u0[i + 1] -= f * u1[i];
            u1[i + 1] -= f * u2[i];
            x[i + 1] -= f * x[i];
        }
        lower[i] = 0.0;
    }
    if n > 0 && u0[n - 1].abs() < tiny {
        u0[n - 1] = tiny;
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / u0[i];
    }
    x
}

pub fn tridiag_apply(diag: &[f64], off: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let mut s = diag[i] * x[i];
            if i > 0 {
                s += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += off[i] * x[i + 1];
            }
            s
        })
        .collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Unit eigenvector for an (accurate) eigenvalue estimate, by inverse
/// iteration. Returns the vector and ‖Tv - λv‖.
pub fn inverse_iteration(diag: &[f64], off: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = diag.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let scale = gershgorin(diag, off).1.abs().max(1.0);
    let mut res = f64::INFINITY;
    let mut prev = f64::INFINITY;
    for it in 0..10 {
        let mut w = solve_shifted_pivoting(diag, off, lambda, &v);
        let nw = norm(&w);
        if !nw.is_finite() || nw == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let tw = tridiag_apply(diag, off, &w);
        res = tw.iter().zip(&w).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        let stalled = res > 0.5 * prev;
        prev = res;
        v = w;
        if res <= 1e-14 * scale || (it >= 2 && stalled) {
            break;
        }
    }
    if !res.is_finite() {
        return Err(Error::NonConvergence("inverse iteration".into()));
    }
    Ok((v, res))
}

/// Solve the dense system a x = b by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        if a[piv][c] == 0.0 {
            return Err(Error::NonConvergence("singular dense system".into()));
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}
