//! Sample covariance and inverse-covariance errors in spectral norm.

use serde::Serialize;

use crate::ensembles::{gram, DesignSpec};
use crate::error::{invalid, Result};
use crate::linalg::{default_rank_tol, singular_values, svd, sym_spectral_norm, DenseMatrix};
use crate::mc::{divergence_diagnostic, summarize, Engine, MomentEstimate, Statistic};
use crate::rng::{StreamKey, TrialRng};

/// Population covariance of a design, with what the error norms need.
#[derive(Debug, Clone, PartialEq)]
pub struct CovTarget {
    sigma: DenseMatrix,
    sigma_inv: DenseMatrix,
    sigma_inv_norm: f64,
    scalar: Option<f64>,
}

impl CovTarget {
    pub fn new(spec: &DesignSpec) -> Result<Self> {
        let model = spec.population_covariance()?;
        Ok(Self {
            sigma: model.matrix().clone(),
            sigma_inv: model.inverse().clone(),
            sigma_inv_norm: 1.0 / model.c_min(),
            scalar: model.scalar(),
        })
    }

    pub fn sigma(&self) -> &DenseMatrix {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &DenseMatrix {
        &self.sigma_inv
    }
}

/// Spectral-norm errors of one sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovErrorSample {
    /// `‖S - Σ‖₂`.
    pub forward_error: f64,
    /// `‖S⁻¹ - Σ⁻¹‖₂`; `+∞` when `p > n` or `S` is numerically singular.
    pub inverse_error: f64,
    /// `max(√(p/n), p/n)`.
    pub rate_denominator: f64,
    /// `‖S⁻¹‖₂`, `+∞` when singular.
    pub s_inv_norm: f64,
    /// `‖Σ⁻¹‖₂`.
    pub sigma_inv_norm: f64,
}

impl CovErrorSample {
    /// Checks `‖S⁻¹ - Σ⁻¹‖ <= ‖S⁻¹‖ ‖Σ - S‖ ‖Σ⁻¹‖` with relative `slack`.
    pub fn resolvent_holds(&self, slack: f64) -> bool {
        if !self.inverse_error.is_finite() {
            return true;
        }
        let bound = self.s_inv_norm * self.forward_error * self.sigma_inv_norm;
        self.inverse_error <= bound * (1.0 + slack) + slack * self.sigma_inv_norm
    }
}

pub fn rate_denominator(n: usize, p: usize) -> f64 {
    let g = p as f64 / n as f64;
    g.sqrt().max(g)
}

/// Draws one design per `spec` and measures both errors against its
/// population covariance.
pub fn cov_errors(spec: &DesignSpec, rng: &mut TrialRng) -> Result<CovErrorSample> {
    cov_errors_with(spec, &CovTarget::new(spec)?, rng)
}

/// [`cov_errors`] with a precomputed target.
pub fn cov_errors_with(
    spec: &DesignSpec,
    target: &CovTarget,
    rng: &mut TrialRng,
) -> Result<CovErrorSample> {
    let x = spec.sample(rng)?;
    errors_of_design(&x, target)
}

/// Errors of `S = XᵀX/n` for a fixed design.
pub fn errors_of_design(x: &DenseMatrix, target: &CovTarget) -> Result<CovErrorSample> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let rate = rate_denominator(n, p);
    if let Some(c) = target.scalar {
        let s = singular_values(x)?;
        let mut eig: Vec<f64> = s.iter().map(|v| v * v / nf).collect();
        eig.resize(p, 0.0);
        let forward_error = eig.iter().map(|l| (l - c).abs()).fold(0.0, f64::max);
        let s_min = s[s.len() - 1];
        let singular = p > n || s_min <= default_rank_tol(n, p, s[0]);
        let (inverse_error, s_inv_norm) = if singular {
            (f64::INFINITY, f64::INFINITY)
        } else {
            (
                eig.iter().map(|l| (1.0 / l - 1.0 / c).abs()).fold(0.0, f64::max),
                nf / (s_min * s_min),
            )
        };
        return Ok(CovErrorSample {
            forward_error,
            inverse_error,
            rate_denominator: rate,
            s_inv_norm,
            sigma_inv_norm: 1.0 / c,
        });
    }

    let s = gram(x);
    let forward_error = sym_spectral_norm(&s.sub(&target.sigma)?)?;
    let mut inverse_error = f64::INFINITY;
    let mut s_inv_norm = f64::INFINITY;
    if p <= n {
        let d = svd(x)?;
        let s_min = d.s[p - 1];
        if s_min > default_rank_tol(n, p, d.s[0]) {
            let w: Vec<f64> = d.s.iter().map(|v| nf / (v * v)).collect();
            let s_inv = DenseMatrix::from_fn(p, p, |i, j| {
                let (vi, vj) = (d.v.row(i), d.v.row(j));
                (0..p).map(|k| vi[k] * w[k] * vj[k]).sum()
            });
            inverse_error = sym_spectral_norm(&s_inv.sub(&target.sigma_inv)?)?;
            s_inv_norm = w[p - 1];
        }
    }
    Ok(CovErrorSample {
        forward_error,
        inverse_error,
        rate_denominator: rate,
        s_inv_norm,
        sigma_inv_norm: target.sigma_inv_norm,
    })
}

/// Normalized error moments at one `(n, p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub p: usize,
    pub r: f64,
    pub trials: u64,
    /// `(E‖S - Σ‖ʳ)^{1/r}`.
    pub forward_norm_moment: f64,
    pub forward_ratio: f64,
    pub forward_ratio_stderr: f64,
    /// `(E‖S⁻¹ - Σ⁻¹‖ʳ)^{1/r}` over trials with finite error.
    pub inverse_norm_moment: f64,
    pub inverse_ratio: f64,
    pub inverse_ratio_stderr: f64,
    pub rate_denominator: f64,
    pub overflow_count: u64,
    /// Trials on which the resolvent inequality failed.
    pub resolvent_violations: u64,
    /// `n > p + 2r - 1`.
    pub valid: bool,
}

impl RateRow {
    pub const CSV_HEADER: &'static str = "n,p,r,trials,forward_norm_moment,forward_ratio,inverse_norm_moment,inverse_ratio,overflow_count";

    pub fn csv_record(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.p,
            self.r,
            self.trials,
            self.forward_norm_moment,
            self.forward_ratio,
            self.inverse_norm_moment,
            self.inverse_ratio,
            self.overflow_count
        )
    }
}

/// `(E Xʳ)^{1/r}` and its delta-method standard error.
fn root_moment(values: &[f64], r: f64) -> (f64, f64) {
    let powered: Vec<f64> = values.iter().map(|v| v.powf(r)).collect();
    let s = summarize(&powered);
    let m = s.mean.powf(1.0 / r);
    (m, s.mean.powf(1.0 / r - 1.0) / r * s.stderr)
}

/// Forward and inverse error moments over a grid of `(n, p)`, each
/// normalized by `max(√(p/n), p/n)`. Grid point `g` uses trial indices
/// `g·trials .. (g+1)·trials`.
pub fn rate_experiment(
    spec_for: impl Fn(usize, usize) -> Result<DesignSpec>,
    grid: &[(usize, usize)],
    r: f64,
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<Vec<RateRow>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("moment order r must be > 0, got {r}")));
    }
    if trials < 2 {
        return Err(invalid("rate_experiment needs at least 2 trials"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (g, &(n, p)) in grid.iter().enumerate() {
        let spec = spec_for(n, p)?;
        let target = CovTarget::new(&spec)?;
        let offset = g as u64 * trials;
        let samples = engine.try_map(offset..offset + trials, |i| {
            cov_errors_with(&spec, &target, &mut StreamKey::new(master_seed, i).generator())
        })?;
        let forward: Vec<f64> = samples.iter().map(|s| s.forward_error).collect();
        let inverse: Vec<f64> = samples
            .iter()
            .map(|s| s.inverse_error)
            .filter(|v| v.is_finite())
            .collect();
        let rate = rate_denominator(n, p);
        let (fm, fse) = root_moment(&forward, r);
        let (im, ise) = root_moment(&inverse, r);
        rows.push(RateRow {
            n,
            p,
            r,
            trials,
            forward_norm_moment: fm,
            forward_ratio: fm / rate,
            forward_ratio_stderr: fse / rate,
            inverse_norm_moment: im,
            inverse_ratio: im / rate,
            inverse_ratio_stderr: ise / rate,
            rate_denominator: rate,
            overflow_count: trials - inverse.len() as u64,
            resolvent_violations: samples.iter().filter(|s| !s.resolvent_holds(1e-9)).count()
                as u64,
            valid: n as f64 > p as f64 + 2.0 * r - 1.0,
        });
    }
    Ok(rows)
}

/// Running means of `‖S⁻¹ - Σ⁻¹‖₂` under the counterexample law.
pub fn counterexample_inverse_divergence(
    n: usize,
    p: usize,
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<MomentEstimate> {
    if p < 2 || p > n {
        return Err(invalid(format!("requires 2 <= p <= n (n={n}, p={p})")));
    }
    let spec = DesignSpec::counterexample(n, p)?;
    divergence_diagnostic(&spec, Statistic::InvCovError, trials, master_seed, engine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{counterexample_second_moment, CovarianceKind, EntryLaw};

    fn rng(seed: u64) -> TrialRng {
        StreamKey::new(seed, 0).generator()
    }

    #[test]
    fn forward_error_vanishes_with_n() {
        let spec = DesignSpec::gaussian(100_000, 2).unwrap();
        let e = cov_errors(&spec, &mut rng(crate::rng::DEFAULT_SEED)).unwrap();
        assert!(e.forward_error < 0.05, "{}", e.forward_error);
    }

    #[test]
    fn scalar_case_matches_chi_squared_simulation() {
        let spec = DesignSpec::gaussian(500, 1).unwrap();
        let e = cov_errors(&spec, &mut rng(3)).unwrap();
        let mut g = rng(3);
        let chi: f64 = (0..500).map(|_| g.standard_normal().powi(2)).sum();
        assert!((e.forward_error - (chi / 500.0 - 1.0).abs()).abs() < 1e-12);
        assert!((e.inverse_error - (500.0 / chi - 1.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_target_uses_exact_inverse() {
        let spec = DesignSpec::new(
            50,
            2,
            CovarianceKind::Diagonal {
                values: vec![4.0, 1.0],
            },
            EntryLaw::Gaussian,
        )
        .unwrap();
        let t = CovTarget::new(&spec).unwrap();
        assert_eq!(t.sigma_inv().as_slice(), &[0.25, 0.0, 0.0, 1.0]);
        let x = spec.sample(&mut rng(8)).unwrap();
        let e = errors_of_design(&x, &t).unwrap();
        let s = gram(&x);
        let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
        let d = DenseMatrix::from_rows(&[
            &[s[(1, 1)] / det - 0.25, -s[(0, 1)] / det],
            &[-s[(1, 0)] / det, s[(0, 0)] / det - 1.0],
        ])
        .unwrap();
        let expect = sym_spectral_norm(&d).unwrap();
        assert!((e.inverse_error - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn general_and_scalar_paths_agree() {
        let spec = DesignSpec::gaussian(40, 6).unwrap();
        let x = spec.sample(&mut rng(2)).unwrap();
        let scalar = CovTarget::new(&spec).unwrap();
        let mut general = scalar.clone();
        general.scalar = None;
        let a = errors_of_design(&x, &scalar).unwrap();
        let b = errors_of_design(&x, &general).unwrap();
        assert!((a.forward_error - b.forward_error).abs() < 1e-12);
        assert!((a.inverse_error - b.inverse_error).abs() < 1e-10);
        assert!((a.s_inv_norm - b.s_inv_norm).abs() < 1e-10 * a.s_inv_norm);
    }

    #[test]
    fn wide_design_has_infinite_inverse_error() {
        let spec = DesignSpec::gaussian(3, 5).unwrap();
        let e = cov_errors(&spec, &mut rng(1)).unwrap();
        assert!(e.inverse_error.is_infinite() && e.forward_error.is_finite());
    }

    #[test]
    fn resolvent_inequality_on_samples() {
        let specs = [
            DesignSpec::gaussian(20, 10).unwrap(),
            DesignSpec::new(30, 5, CovarianceKind::Ar1 { rho: 0.6 }, EntryLaw::Gaussian).unwrap(),
            DesignSpec::counterexample(6, 4).unwrap(),
        ];
        for spec in &specs {
            let t = CovTarget::new(spec).unwrap();
            for i in 0..300 {
                let e =
                    cov_errors_with(spec, &t, &mut StreamKey::new(5, i).generator()).unwrap();
                assert!(e.resolvent_holds(1e-9), "{e:?}");
            }
        }
    }

    #[test]
    fn sample_covariance_is_unbiased() {
        let spec = DesignSpec::new(10, 5, CovarianceKind::Ar1 { rho: 0.4 }, EntryLaw::Gaussian)
            .unwrap();
        let trials = 10_000;
        let grams: Vec<DenseMatrix> = (0..trials)
            .map(|i| gram(&spec.sample(&mut StreamKey::new(21, i).generator()).unwrap()))
            .collect();
        let sigma = spec.covariance.matrix();
        for a in 0..5 {
            for b in 0..5 {
                let xs: Vec<f64> = grams.iter().map(|s| s[(a, b)]).collect();
                let s = summarize(&xs);
                assert!((s.mean - sigma[(a, b)]).abs() <= 4.0 * s.stderr, "({a},{b})");
            }
        }
    }

    #[test]
    fn counterexample_target_is_second_moment() {
        let spec = DesignSpec::counterexample(5, 3).unwrap();
        let t = CovTarget::new(&spec).unwrap();
        assert_eq!(t.scalar, Some(counterexample_second_moment()));
    }

    #[test]
    fn rate_rows_flag_precondition() {
        let rows = rate_experiment(
            DesignSpec::gaussian,
            &[(20, 5), (6, 5)],
            2.0,
            20,
            1,
            &Engine::serial(),
        )
        .unwrap();
        assert!(rows[0].valid && !rows[1].valid);
        assert_eq!(rows[0].resolvent_violations, 0);
        assert!(counterexample_inverse_divergence(3, 4, 10, 0, &Engine::serial()).is_err());
    }
}
