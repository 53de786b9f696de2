//! Random design ensembles, covariance models and Gram matrices.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{sym_eig, DenseMatrix};
use crate::rng::TrialRng;
use crate::special::adaptive_simpson;

/// Population covariance family, as written in experiment configs:
/// `{"kind": "ar1", "params": {"rho": 0.5}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum CovarianceKind {
    Identity,
    ScaledIdentity { c: f64 },
    Diagonal { values: Vec<f64> },
    Ar1 { rho: f64 },
    /// Any symmetric positive definite matrix, given row by row.
    Dense { rows: Vec<Vec<f64>> },
}

impl CovarianceKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::ScaledIdentity { .. } => "scaled_identity",
            Self::Diagonal { .. } => "diagonal",
            Self::Ar1 { .. } => "ar1",
            Self::Dense { .. } => "dense",
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity)
    }
}

/// A covariance matrix with certified eigenvalue bounds
/// `0 < c_min <= λ_min <= λ_max <= c_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    kind: CovarianceKind,
    dim: usize,
    c_min: f64,
    c_max: f64,
    matrix: DenseMatrix,
    sqrt: DenseMatrix,
    inverse: DenseMatrix,
}

impl CovarianceModel {
    pub fn new(kind: CovarianceKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("covariance dimension must be at least 1"));
        }
        let matrix = match &kind {
            CovarianceKind::Identity => DenseMatrix::identity(dim),
            CovarianceKind::ScaledIdentity { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(invalid(format!("scaled identity needs c > 0, got {c}")));
                }
                DenseMatrix::identity(dim).scale(*c)
            }
            CovarianceKind::Diagonal { values } => {
                if values.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{dim} diagonal values"),
                        found: format!("{}", values.len()),
                    });
                }
                DenseMatrix::from_diag(values)
            }
            CovarianceKind::Ar1 { rho } => {
                if !(rho.is_finite() && rho.abs() < 1.0) {
                    return Err(invalid(format!("ar1 needs |rho| < 1, got {rho}")));
                }
                DenseMatrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32))
            }
            CovarianceKind::Dense { rows } => {
                let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                let m = DenseMatrix::from_rows(&refs)?;
                if m.shape() != (dim, dim) {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{dim}x{dim}"),
                        found: format!("{}x{}", m.rows(), m.cols()),
                    });
                }
                m
            }
        };
        matrix.check_finite()?;

        let eig = sym_eig(&matrix)?;
        let c_max = eig.values[0];
        let c_min = eig.values[dim - 1];
        if !(c_min > 0.0) {
            return Err(Error::NotPsd {
                min_eigenvalue: c_min,
            });
        }
        let (sqrt, inverse) = match &kind {
            CovarianceKind::Identity | CovarianceKind::ScaledIdentity { .. } => {
                let c = matrix[(0, 0)];
                (
                    DenseMatrix::identity(dim).scale(c.sqrt()),
                    DenseMatrix::identity(dim).scale(1.0 / c),
                )
            }
            CovarianceKind::Diagonal { values } => (
                DenseMatrix::from_diag(&values.iter().map(|v| v.sqrt()).collect::<Vec<_>>()),
                DenseMatrix::from_diag(&values.iter().map(|v| 1.0 / v).collect::<Vec<_>>()),
            ),
            _ => (
                eig.reconstruct_with(|l| l.max(0.0).sqrt()),
                eig.reconstruct_with(|l| 1.0 / l),
            ),
        };
        Ok(Self {
            kind,
            dim,
            c_min,
            c_max,
            matrix,
            sqrt,
            inverse,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(CovarianceKind::Identity, dim).expect("identity is positive definite")
    }

    pub fn ar1(dim: usize, rho: f64) -> Result<Self> {
        Self::new(CovarianceKind::Ar1 { rho }, dim)
    }

    pub fn kind(&self) -> &CovarianceKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Certified lower eigenvalue bound.
    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    /// Certified upper eigenvalue bound.
    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn sqrt(&self) -> &DenseMatrix {
        &self.sqrt
    }

    pub fn inverse(&self) -> &DenseMatrix {
        &self.inverse
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `Some(c)` when the matrix is `c * I`.
    pub fn scalar(&self) -> Option<f64> {
        match self.kind {
            CovarianceKind::Identity => Some(1.0),
            CovarianceKind::ScaledIdentity { c } => Some(c),
            _ => None,
        }
    }

    /// Right-multiplies `z` (rows i.i.d. N(0, I)) by the square root so the
    /// rows become i.i.d. N(0, Σ).
    pub fn color(&self, z: DenseMatrix) -> Result<DenseMatrix> {
        if z.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: format!("{} columns", self.dim),
                found: format!("{} columns", z.cols()),
            });
        }
        match &self.kind {
            CovarianceKind::Identity => Ok(z),
            CovarianceKind::ScaledIdentity { c } => Ok(z.scale(c.sqrt())),
            CovarianceKind::Diagonal { values } => {
                let scales: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
                let mut z = z;
                for i in 0..z.rows() {
                    for (x, s) in z.row_mut(i).iter_mut().zip(&scales) {
                        *x *= s;
                    }
                }
                Ok(z)
            }
            _ => z.matmul(&self.sqrt),
        }
    }
}

/// Entry distribution of the design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    /// Rows i.i.d. N(0, Σ).
    Gaussian,
    /// I.i.d. entries `Z * U` with Rademacher `Z` and `U` drawn from
    /// `F(u) = 1 / log(e / u)`: bounded, hence sub-Gaussian, yet with
    /// infinite inverse moments of the smallest singular value.
    Counterexample,
}

/// Exact aspect ratio `γ = p / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectRatio {
    pub p: usize,
    pub n: usize,
}

impl AspectRatio {
    pub fn value(self) -> f64 {
        self.p as f64 / self.n as f64
    }
}

/// Serializable form of a [`DesignSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub n: usize,
    pub p: usize,
    #[serde(default = "identity_kind")]
    pub covariance: CovarianceKind,
    #[serde(default = "gaussian_law")]
    pub entry_law: EntryLaw,
}

fn identity_kind() -> CovarianceKind {
    CovarianceKind::Identity
}

fn gaussian_law() -> EntryLaw {
    EntryLaw::Gaussian
}

/// Sample size, dimension, covariance and entry law of a random design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    pub covariance: CovarianceModel,
    pub entry_law: EntryLaw,
}

impl DesignSpec {
    pub fn new(n: usize, p: usize, covariance: CovarianceKind, entry_law: EntryLaw) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(invalid(format!("design needs n, p >= 1 (got n={n}, p={p})")));
        }
        if entry_law == EntryLaw::Counterexample {
            if !covariance.is_identity() {
                return Err(invalid(format!(
                    "counterexample law requires identity covariance, got {}",
                    covariance.name()
                )));
            }
            if p < 2 {
                return Err(invalid("counterexample law requires p >= 2"));
            }
        }
        Ok(Self {
            n,
            p,
            covariance: CovarianceModel::new(covariance, p)?,
            entry_law,
        })
    }

    pub fn gaussian(n: usize, p: usize) -> Result<Self> {
        Self::new(n, p, CovarianceKind::Identity, EntryLaw::Gaussian)
    }

    pub fn counterexample(n: usize, p: usize) -> Result<Self> {
        Self::new(n, p, CovarianceKind::Identity, EntryLaw::Counterexample)
    }

    pub fn from_config(config: &DesignConfig) -> Result<Self> {
        Self::new(config.n, config.p, config.covariance.clone(), config.entry_law)
    }

    pub fn to_config(&self) -> DesignConfig {
        DesignConfig {
            n: self.n,
            p: self.p,
            covariance: self.covariance.kind().clone(),
            entry_law: self.entry_law,
        }
    }

    pub fn aspect_ratio(&self) -> AspectRatio {
        AspectRatio {
            p: self.p,
            n: self.n,
        }
    }

    /// Draws one `n x p` design.
    pub fn sample(&self, rng: &mut TrialRng) -> Result<DenseMatrix> {
        match self.entry_law {
            EntryLaw::Gaussian => correlated_gaussian(self, rng),
            EntryLaw::Counterexample => counterexample_matrix(self.n, self.p, rng),
        }
    }

    /// Population covariance `E[S_n]` of one row.
    pub fn population_covariance(&self) -> Result<CovarianceModel> {
        match self.entry_law {
            EntryLaw::Gaussian => Ok(self.covariance.clone()),
            EntryLaw::Counterexample => CovarianceModel::new(
                CovarianceKind::ScaledIdentity {
                    c: counterexample_second_moment(),
                },
                self.p,
            ),
        }
    }
}

/// `n x p` matrix of independent standard normals.
pub fn gaussian_iid(n: usize, p: usize, rng: &mut TrialRng) -> DenseMatrix {
    DenseMatrix::from_fn(n, p, |_, _| rng.standard_normal())
}

/// `Z Σ^{1/2}` with `Z` standard Gaussian: rows i.i.d. N(0, Σ).
pub fn correlated_gaussian(spec: &DesignSpec, rng: &mut TrialRng) -> Result<DenseMatrix> {
    if spec.entry_law != EntryLaw::Gaussian {
        return Err(invalid("correlated_gaussian requires the gaussian entry law"));
    }
    spec.covariance.color(gaussian_iid(spec.n, spec.p, rng))
}

/// I.i.d. entries `X_ij = Z_ij U_ij`, all strictly inside (-1, 1).
pub fn counterexample_matrix(n: usize, p: usize, rng: &mut TrialRng) -> Result<DenseMatrix> {
    if n == 0 || p < 2 {
        return Err(invalid(format!(
            "counterexample matrix needs n >= 1 and p >= 2 (got n={n}, p={p})"
        )));
    }
    Ok(DenseMatrix::from_fn(n, p, |_, _| {
        let sign = rng.rademacher() as f64;
        sign * rng.counterexample_u()
    }))
}

/// Uncentered Gram matrix `XᵀX / n`.
pub fn gram(x: &DenseMatrix) -> DenseMatrix {
    let (n, p) = x.shape();
    let mut s = DenseMatrix::zeros(p, p);
    {
        let data = s.as_mut_slice();
        for k in 0..n {
            let row = x.row(k);
            for (i, &xi) in row.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let target = &mut data[i * p + i..(i + 1) * p];
                for (t, &xj) in target.iter_mut().zip(&row[i..]) {
                    *t += xi * xj;
                }
            }
        }
    }
    let inv_n = 1.0 / n.max(1) as f64;
    for i in 0..p {
        for j in i..p {
            let v = s[(i, j)] * inv_n;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// `E[U²]` under `F(u) = 1 / log(e / u)`, by adaptive quadrature of
/// `∫ u² dF(u) = ∫_0^1 exp(2 - 2/q) dq` (substituting `u = exp(1 - 1/q)`).
pub fn counterexample_second_moment() -> f64 {
    static CACHE: OnceLock<f64> = OnceLock::new();
    *CACHE.get_or_init(|| {
        adaptive_simpson(
            &|q: f64| if q <= 0.0 { 0.0 } else { (2.0 - 2.0 / q).exp() },
            0.0,
            1.0,
            1e-10,
        )
    })
}
