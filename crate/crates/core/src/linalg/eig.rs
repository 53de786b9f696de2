//! Cyclic Jacobi eigensolver for symmetric matrices.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Relative asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigendecomposition `S = V diag(values) Vᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Non-increasing.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: DenseMatrix,
}

impl SymEig {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let vi = self.vectors.row(i);
            for j in i..n {
                let vj = self.vectors.row(j);
                let acc: f64 = (0..n).map(|k| vi[k] * fv[k] * vj[k]).sum();
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }
}

pub(crate) fn check_symmetric(s: &DenseMatrix) -> Result<()> {
    if !s.is_square() {
        return Err(Error::NotSquare {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    s.check_finite()?;
    let asym = s.asymmetry();
    if asym > SYMMETRY_TOL * s.max_abs() {
        return Err(Error::Asymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric
/// matrix. Input asymmetric beyond `1e-12` relative is rejected.
pub fn sym_eig(s: &DenseMatrix) -> Result<SymEig> {
    check_symmetric(s)?;
    let (values, vt) = jacobi(s, true);
    let vt = vt.expect("vectors requested");
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]));
    let sorted: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, k| vt[order[k] * n + i]);
    Ok(SymEig {
        values: sorted,
        vectors,
    })
}

/// Eigenvalues only, descending.
pub fn sym_eigvals(s: &DenseMatrix) -> Result<Vec<f64>> {
    check_symmetric(s)?;
    let (mut values, _) = jacobi(s, false);
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Runs cyclic Jacobi sweeps on a symmetrized copy. Eigenvectors are kept
/// as rows of `vt` so every rotation touches contiguous memory.
fn jacobi(s: &DenseMatrix, vectors: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = s.rows();
    let mut a = s.clone();
    a.symmetrize();
    let mut a = a.into_vec();
    let mut vt = vectors.then(|| {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    });
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = 1e-3 * f64::EPSILON * scale;
    let mut new_p = vec![0.0; n];
    let mut new_q = vec![0.0; n];

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if apq.abs() <= floor
                    || apq.abs() <= f64::EPSILON * app.abs().sqrt() * aqq.abs().sqrt()
                {
                    if apq != 0.0 && apq.abs() <= floor {
                        a[p * n + q] = 0.0;
                        a[q * n + p] = 0.0;
                    }
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + theta.hypot(1.0))
                };
                let c = 1.0 / t.hypot(1.0);
                let sn = t * c;

                {
                    let row_p = &a[p * n..(p + 1) * n];
                    let row_q = &a[q * n..(q + 1) * n];
                    for k in 0..n {
                        new_p[k] = c * row_p[k] - sn * row_q[k];
                        new_q[k] = sn * row_p[k] + c * row_q[k];
                    }
                }
                for k in 0..n {
                    a[k * n + p] = new_p[k];
                    a[k * n + q] = new_q[k];
                }
                a[p * n..(p + 1) * n].copy_from_slice(&new_p);
                a[q * n..(q + 1) * n].copy_from_slice(&new_q);
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                if let Some(v) = vt.as_mut() {
                    let (head, tail) = v.split_at_mut(q * n);
                    let vp = &mut head[p * n..(p + 1) * n];
                    let vq = &mut tail[..n];
                    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                        let (xp, xq) = (*x, *y);
                        *x = c * xp - sn * xq;
                        *y = sn * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    (values, vt)
}
