//! Self-contained dense linear algebra: Jacobi SVD, Jacobi symmetric
//! eigendecomposition, PSD square root, Moore-Penrose pseudo-inverse.

mod eig;
mod matrix;
mod svd;

use serde::{Deserialize, Serialize};

pub use eig::{sym_eig, sym_eigvals, SymEig, SYMMETRY_TOL};
pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub use svd::{singular_values, svd, Svd};


use crate::error::{invalid, Error, Result};

/// Extreme singular values, condition number and full spectrum of one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub s_max: f64,
    /// The `min(n, p)`-th singular value.
    pub s_min: f64,
    /// `s_max / s_min`, `+inf` when `s_min = 0`.
    pub kappa: f64,
    /// Descending, length `min(n, p)`.
    pub spectrum: Vec<f64>,
}

impl SpectralSummary {
    pub fn from_spectrum(spectrum: Vec<f64>) -> Self {
        let s_max = spectrum.first().copied().unwrap_or(0.0);
        let s_min = spectrum.last().copied().unwrap_or(0.0);
        let kappa = condition_number(s_max, s_min);
        Self {
            s_max,
            s_min,
            kappa,
            spectrum,
        }
    }
}

pub(crate) fn condition_number(s_max: f64, s_min: f64) -> f64 {
    if s_min > 0.0 {
        (s_max / s_min).max(1.0)
    } else {
        f64::INFINITY
    }
}

pub fn spectral_summary(a: &DenseMatrix) -> Result<SpectralSummary> {
    if a.rows().min(a.cols()) == 0 {
        return Err(invalid("spectral summary needs a non-empty matrix"));
    }
    Ok(SpectralSummary::from_spectrum(singular_values(a)?))
}

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Spectral norm of a symmetric matrix, `max |λ_i|`.
pub fn sym_spectral_norm(s: &DenseMatrix) -> Result<f64> {
    Ok(sym_eigvals(s)?.iter().fold(0.0, |m, l| m.max(l.abs())))
}

/// Default rank tolerance `max(rows, cols) * eps * s_max`.
pub fn default_rank_tol(rows: usize, cols: usize, s_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * s_max
}

/// Number of singular values above the default rank tolerance.
pub fn numerical_rank(a: &DenseMatrix) -> Result<usize> {
    let s = singular_values(a)?;
    let tol = default_rank_tol(a.rows(), a.cols(), s.first().copied().unwrap_or(0.0));
    Ok(s.iter().filter(|&&x| x > tol).count())
}

/// Symmetric PSD square root. Eigenvalues down to `-1e-10 * λ_max` are
/// clamped to zero; anything more negative is rejected.
pub fn sqrt_psd(s: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = sym_eig(s)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    if lmin < -1e-10 * lmax || (lmax == 0.0 && lmin < 0.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: lmin,
        });
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Moore-Penrose pseudo-inverse. Singular values at or below `rank_tol`
/// (default `max(rows, cols) * eps * s_max`) are treated as zero.
pub fn pinv(a: &DenseMatrix, rank_tol: Option<f64>) -> Result<DenseMatrix> {
    let Svd { u, s, v } = svd(a)?;
    let tol = rank_tol
        .unwrap_or_else(|| default_rank_tol(a.rows(), a.cols(), s.first().copied().unwrap_or(0.0)));
    let (m, n) = a.shape();
    let mut out = DenseMatrix::zeros(n, m);
    for (k, &sk) in s.iter().enumerate() {
        if sk <= tol || sk == 0.0 {
            continue;
        }
        let inv = 1.0 / sk;
        for i in 0..n {
            let vik = v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vik * u[(j, k)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut g = StreamKey::new(seed, 0).generator();
        DenseMatrix::from_fn(rows, cols, |_, _| g.standard_normal())
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    fn reconstruct(svd: &Svd) -> DenseMatrix {
        let us = DenseMatrix::from_fn(svd.u.rows(), svd.s.len(), |i, k| svd.u[(i, k)] * svd.s[k]);
        us.matmul(&svd.v.transpose()).unwrap()
    }

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        let qtq = q.t_matmul(q).unwrap();
        qtq.sub(&DenseMatrix::identity(q.cols())).unwrap().max_abs()
    }

    #[test]
    fn svd_small_examples() {
        let d = DenseMatrix::from_diag(&[3.0, 1.0]);
        assert_close(&svd(&d).unwrap().s, &[3.0, 1.0], 1e-15);
        assert_close(&svd(&DenseMatrix::identity(4)).unwrap().s, &[1.0; 4], 1e-15);

        // AᵀA = [[1,1],[1,2]] has eigenvalues (3 ± √5)/2.
        let a = DenseMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let expected = [
            ((3.0 + 5f64.sqrt()) / 2.0).sqrt(),
            ((3.0 - 5f64.sqrt()) / 2.0).sqrt(),
        ];
        let s = svd(&a).unwrap().s;
        assert_close(&s, &expected, 1e-14);
        assert!((s[0] - 1.618034).abs() < 1e-6 && (s[1] - 0.618034).abs() < 1e-6);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = DenseMatrix::identity(2);
        a[(1, 0)] = f64::INFINITY;
        assert!(matches!(svd(&a), Err(Error::NonFinite { row: 1, col: 0 })));
        assert!(singular_values(&a).is_err());
    }

    #[test]
    fn svd_reconstructs_rectangular() {
        for &(m, n) in &[(7, 3), (3, 7), (20, 20), (1, 5), (5, 1), (60, 25)] {
            let a = gaussian(m, n, (m * 100 + n) as u64);
            let dec = svd(&a).unwrap();
            let smax = dec.s[0];
            let resid = spectral_norm(&a.sub(&reconstruct(&dec)).unwrap()).unwrap();
            assert!(resid <= 1e-12 * smax, "{m}x{n}: {resid}");
            assert!(orthonormality_error(&dec.u) < 1e-12);
            assert!(orthonormality_error(&dec.v) < 1e-12);
            assert!(dec.s.windows(2).all(|w| w[0] >= w[1]));
            assert_close(&dec.s, &singular_values(&a).unwrap(), 1e-12 * smax);
        }
    }

    #[test]
    fn svd_rank_deficient_vectors_stay_orthonormal() {
        let ones = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let dec = svd(&ones).unwrap();
        assert_close(&dec.s, &[2.0, 0.0], 1e-15);
        assert!(orthonormality_error(&dec.u) < 1e-14);
        assert!(orthonormality_error(&dec.v) < 1e-14);

        let zero = DenseMatrix::zeros(3, 2);
        let dec = svd(&zero).unwrap();
        assert_eq!(dec.s, vec![0.0, 0.0]);
        assert!(orthonormality_error(&dec.v) < 1e-14);
    }

    #[test]
    fn small_singular_values_keep_relative_accuracy() {
        // Column scaling by 1e-12 scales the matching singular value.
        let mut a = DenseMatrix::identity(3);
        a[(0, 1)] = 0.5;
        let mut scaled = a.clone();
        for i in 0..3 {
            scaled[(i, 2)] *= 1e-12;
        }
        let s = singular_values(&scaled).unwrap();
        assert!((s[2] / 1e-12 - 1.0).abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn summary_examples() {
        let d = DenseMatrix::from_diag(&[3.0, 1.0]);
        let sum = spectral_summary(&d).unwrap();
        assert_eq!(sum.kappa, 3.0);
        assert_eq!(sum.s_max, sum.spectrum[0]);

        let ones = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let sum = spectral_summary(&ones).unwrap();
        assert!((sum.s_max - 2.0).abs() < 1e-15);
        assert_eq!(sum.s_min, 0.0);
        assert_eq!(sum.kappa, f64::INFINITY);

        let a = gaussian(9, 4, 3);
        let k1 = spectral_summary(&a).unwrap().kappa;
        let k2 = spectral_summary(&a.scale(-7.25)).unwrap().kappa;
        assert!((k1 - k2).abs() <= 1e-12 * k1);

        assert!(spectral_summary(&DenseMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn sym_eig_examples() {
        let e = sym_eig(&DenseMatrix::from_diag(&[5.0, 2.0, 2.0])).unwrap();
        assert_close(&e.values, &[5.0, 2.0, 2.0], 0.0);
        let s = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        assert_close(&sym_eig(&s).unwrap().values, &[3.0, 1.0], 1e-15);
        assert_close(&sym_eig(&DenseMatrix::identity(4)).unwrap().values, &[1.0; 4], 0.0);

        let bad = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&bad), Err(Error::Asymmetric { .. })));
        assert!(matches!(
            sym_eig(&DenseMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn sym_eig_residuals() {
        let x = gaussian(30, 12, 11);
        let s = x.t_matmul(&x).unwrap();
        let e = sym_eig(&s).unwrap();
        let lmax = e.values[0];
        for k in 0..12 {
            let v = e.vector(k);
            let sv = s.matvec(&v).unwrap();
            let r: Vec<f64> = sv.iter().zip(&v).map(|(a, b)| a - e.values[k] * b).collect();
            assert!(norm2(&r) <= 1e-10 * lmax);
        }
        assert!(orthonormality_error(&e.vectors) < 1e-12);
        // eigenvalues of XᵀX are squared singular values of X
        let sv = singular_values(&x).unwrap();
        for (l, s) in e.values.iter().zip(&sv) {
            assert!((l - s * s).abs() <= 1e-10 * lmax);
        }
    }

    #[test]
    fn sqrt_psd_examples() {
        let r = sqrt_psd(&DenseMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert_close(r.as_slice(), &[2.0, 0.0, 0.0, 3.0], 1e-14);
        let r = sqrt_psd(&DenseMatrix::identity(3)).unwrap();
        assert_close(r.as_slice(), DenseMatrix::identity(3).as_slice(), 1e-15);

        let ar1 = DenseMatrix::from_fn(3, 3, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()));
        let r = sqrt_psd(&ar1).unwrap();
        let rr = r.matmul(&r).unwrap();
        assert!(spectral_norm(&rr.sub(&ar1).unwrap()).unwrap() <= 1e-10);
        assert!(r.asymmetry() < 1e-15);

        let neg = DenseMatrix::from_diag(&[1.0, -0.1]);
        assert!(matches!(sqrt_psd(&neg), Err(Error::NotPsd { .. })));
        let barely = DenseMatrix::from_diag(&[1.0, -1e-12]);
        assert!(sqrt_psd(&barely).is_ok());
    }

    #[test]
    fn pinv_examples() {
        let p = pinv(&DenseMatrix::from_diag(&[2.0, 4.0]), None).unwrap();
        assert_close(p.as_slice(), &[0.5, 0.0, 0.0, 0.25], 1e-15);
        let ones = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert_close(pinv(&ones, None).unwrap().as_slice(), &[0.25; 4], 1e-15);
        let z = pinv(&DenseMatrix::zeros(2, 3), None).unwrap();
        assert_eq!(z.shape(), (3, 2));
        assert!(z.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn numerical_rank_counts() {
        let x = gaussian(5, 8, 2);
        assert_eq!(numerical_rank(&x).unwrap(), 5);
        let ones = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(numerical_rank(&ones).unwrap(), 1);
    }
}
