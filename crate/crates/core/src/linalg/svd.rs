//! One-sided Jacobi SVD.
//!
//! Tall inputs are reduced by Householder QR with column pivoting,
//! `A P = Q R`, followed by a second pivoted QR of `Rᵀ`; the Hestenes
//! iteration then orthogonalizes the columns of the resulting triangular
//! factor. Column-wise rotations keep high relative accuracy for small
//! singular values.

use super::matrix::{dot, norm2, DenseMatrix};
use crate::error::Result;

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m x k` with orthonormal columns, `k = min(m, n)`.
    pub u: DenseMatrix,
    /// Non-increasing, non-negative.
    pub s: Vec<f64>,
    /// `n x k` with orthonormal columns.
    pub v: DenseMatrix,
}

/// Full thin SVD with singular vectors.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    a.check_finite()?;
    let (m, n) = a.shape();
    if m >= n {
        let (u, s, v) = tall_svd(a, true);
        Ok(Svd {
            u: u.expect("vectors requested"),
            s,
            v: v.expect("vectors requested"),
        })
    } else {
        let (u, s, v) = tall_svd(&a.transpose(), true);
        Ok(Svd {
            u: v.expect("vectors requested"),
            s,
            v: u.expect("vectors requested"),
        })
    }
}

/// Singular values only, in non-increasing order.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    a.check_finite()?;
    let (m, n) = a.shape();
    let (_, s, _) = if m >= n {
        tall_svd(a, false)
    } else {
        tall_svd(&a.transpose(), false)
    };
    Ok(s)
}

type TallSvd = (Option<DenseMatrix>, Vec<f64>, Option<DenseMatrix>);

/// SVD of an `m x n` matrix with `m >= n`.
fn tall_svd(a: &DenseMatrix, vectors: bool) -> TallSvd {
    let (m, n) = a.shape();
    if n == 0 {
        return (
            vectors.then(|| DenseMatrix::zeros(m, 0)),
            Vec::new(),
            vectors.then(|| DenseMatrix::zeros(0, 0)),
        );
    }

    // Column-major working copy.
    let mut work = vec![0.0; m * n];
    for i in 0..m {
        for (j, &x) in a.row(i).iter().enumerate() {
            work[j * m + i] = x;
        }
    }
    let qr = pivoted_qr(&mut work, m, n);

    // Second (pivoted) QR of Rᵀ: Rᵀ P2 = Q2 R2, so R = P2 R2ᵀ Q2ᵀ.
    let mut rt = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..=j {
            rt[i * n + j] = work[j * m + i];
        }
    }
    let qr2 = pivoted_qr(&mut rt, n, n);

    // B = R2ᵀ, column-major n x n: column i of B is row i of R2.
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            b[i * n + j] = rt[j * n + i];
        }
    }
    // B W = N diag(s), hence A = (Q P2 N) diag(s) (P Q2 W)ᵀ.
    let mut w = vectors.then(|| identity_col_major(n));
    hestenes(&mut b, n, n, w.as_deref_mut());

    let norms: Vec<f64> = (0..n).map(|j| norm2(&b[j * n..(j + 1) * n])).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();

    if !vectors {
        return (None, s, None);
    }
    let w = w.expect("vectors requested");

    // Left factor in the n-dimensional coordinates of Q: P2 N.
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let col = &b[j * n..(j + 1) * n];
        let mut v = vec![0.0; n];
        if s[k] >= f64::MIN_POSITIVE {
            for (i, &x) in col.iter().enumerate() {
                v[qr2.perm[i]] = x / s[k];
            }
        } else {
            missing.push(k);
        }
        left.push(v);
    }
    complete_orthonormal(&mut left, &missing);

    let q = form_q(&work, &qr.tau, m, n);
    let mut u = DenseMatrix::zeros(m, n);
    for (k, col) in left.iter().enumerate() {
        for (l, &c) in col.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let ql = &q[l * m..(l + 1) * m];
            for (i, &qi) in ql.iter().enumerate() {
                u[(i, k)] += qi * c;
            }
        }
    }

    let q2 = form_q(&rt, &qr2.tau, n, n);
    let mut v = DenseMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let wj = &w[j * n..(j + 1) * n];
        for (l, &c) in wj.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let q2l = &q2[l * n..(l + 1) * n];
            for (i, &qi) in q2l.iter().enumerate() {
                v[(qr.perm[i], k)] += qi * c;
            }
        }
    }
    (Some(u), s, Some(v))
}

fn identity_col_major(n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        w[i * n + i] = 1.0;
    }
    w
}

struct PivotedQr {
    perm: Vec<usize>,
    tau: Vec<f64>,
}

/// Householder QR with column pivoting on a column-major `m x n` buffer
/// (`m >= n`). On return the upper triangle holds `R` and the strict lower
/// part holds the reflector tails.
fn pivoted_qr(a: &mut [f64], m: usize, n: usize) -> PivotedQr {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut tau = vec![0.0; n];
    let mut vn1: Vec<f64> = (0..n).map(|j| norm2(&a[j * m..(j + 1) * m])).collect();
    let mut vn2 = vn1.clone();
    let tol3z = f64::EPSILON.sqrt();

    for k in 0..n {
        let pvt = (k..n)
            .max_by(|&x, &y| vn1[x].total_cmp(&vn1[y]).then(y.cmp(&x)))
            .unwrap_or(k);
        if pvt != k {
            for i in 0..m {
                a.swap(pvt * m + i, k * m + i);
            }
            perm.swap(pvt, k);
            vn1.swap(pvt, k);
            vn2.swap(pvt, k);
        }

        let (head, tail) = a.split_at_mut((k + 1) * m);
        let col_k = &mut head[k * m..];
        tau[k] = householder(&mut col_k[k..]);
        if tau[k] != 0.0 {
            let v = &col_k[k..];
            for col in tail.chunks_exact_mut(m) {
                let x = &mut col[k..];
                let w = tau[k] * (x[0] + dot(&v[1..], &x[1..]));
                x[0] -= w;
                for (xi, vi) in x[1..].iter_mut().zip(&v[1..]) {
                    *xi -= w * vi;
                }
            }
        }

        for j in (k + 1)..n {
            if vn1[j] != 0.0 {
                let ratio = a[j * m + k].abs() / vn1[j];
                let temp = (1.0 - ratio * ratio).max(0.0);
                let temp2 = temp * (vn1[j] / vn2[j]).powi(2);
                if temp2 <= tol3z {
                    vn1[j] = norm2(&a[j * m + k + 1..(j + 1) * m]);
                    vn2[j] = vn1[j];
                } else {
                    vn1[j] *= temp.sqrt();
                }
            }
        }
    }
    PivotedQr { perm, tau }
}

/// Generates a reflector `H = I - tau v vᵀ` with `H x = beta e1`. On return
/// `x[0] = beta` and `x[1..]` holds the tail of `v` (`v[0] = 1`).
fn householder(x: &mut [f64]) -> f64 {
    if x.len() <= 1 {
        return 0.0;
    }
    let alpha = x[0];
    let xnorm = norm2(&x[1..]);
    if xnorm == 0.0 {
        return 0.0;
    }
    let beta = -alpha.signum() * norm2(&[alpha, xnorm]);
    let tau = (beta - alpha) / beta;
    let denom = alpha - beta;
    for xi in &mut x[1..] {
        *xi /= denom;
    }
    x[0] = beta;
    tau
}

/// Explicit thin `Q` (column-major `m x n`) from stored reflectors.
fn form_q(qr: &[f64], tau: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * m + j] = 1.0;
    }
    for k in (0..n).rev() {
        if tau[k] == 0.0 {
            continue;
        }
        let v_tail = &qr[k * m + k + 1..(k + 1) * m];
        for j in k..n {
            let x = &mut q[j * m + k..(j + 1) * m];
            let w = tau[k] * (x[0] + dot(v_tail, &x[1..]));
            x[0] -= w;
            for (xi, vi) in x[1..].iter_mut().zip(v_tail) {
                *xi -= w * vi;
            }
        }
    }
    q
}

/// Hestenes one-sided Jacobi on a column-major `rows x cols` buffer.
/// On return the columns are mutually orthogonal; rotations are
/// accumulated into `w` (column-major `cols x cols`) when supplied.
fn hestenes(b: &mut [f64], rows: usize, cols: usize, mut w: Option<&mut [f64]>) {
    let tol = f64::EPSILON * (rows as f64).sqrt();
    let mut d = vec![0.0; cols];
    for _ in 0..MAX_SWEEPS {
        for (j, dj) in d.iter_mut().enumerate() {
            let c = &b[j * rows..(j + 1) * rows];
            *dj = dot(c, c);
        }
        let mut rotated = false;
        for i in 0..cols.saturating_sub(1) {
            for j in (i + 1)..cols {
                let (head, tail) = b.split_at_mut(j * rows);
                let ci = &mut head[i * rows..(i + 1) * rows];
                let cj = &mut tail[..rows];
                let gamma = dot(ci, cj);
                let (alpha, beta) = (d[i], d[j]);
                if gamma == 0.0 || gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + zeta.hypot(1.0))
                };
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate(ci, cj, c, s);
                d[i] = alpha - t * gamma;
                d[j] = beta + t * gamma;
                if let Some(w) = w.as_deref_mut() {
                    let (wh, wt) = w.split_at_mut(j * cols);
                    rotate(&mut wh[i * cols..(i + 1) * cols], &mut wt[..cols], c, s);
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills the listed (zero) columns with unit vectors orthogonal to all
/// other columns, by Gram-Schmidt over the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = cols.first().map_or(0, Vec::len);
    let mut candidate = 0;
    for &k in missing {
        while candidate < n {
            let mut v = vec![0.0; n];
            v[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if j == k || (missing.contains(&j) && c.iter().all(|&x| x == 0.0)) {
                        continue;
                    }
                    let proj = dot(&v, c);
                    for (vi, ci) in v.iter_mut().zip(c) {
                        *vi -= proj * ci;
                    }
                }
            }
            let nv = norm2(&v);
            if nv > 0.5 {
                cols[k] = v.iter().map(|x| x / nv).collect();
                break;
            }
        }
    }
}
