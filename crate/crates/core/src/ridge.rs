//! Multi-response ridge regression and its conditional prediction risk.
//!
//! With `S = XᵀX/n` and `λ̃ = λ/n`, the risk `(1/n) E[‖X(B̂ - B)‖_F² | X]`
//! splits exactly into
//! `λ̃² tr(Bᵀ(S+λ̃I)⁻¹S(S+λ̃I)⁻¹B)` and `tr(Σ_ε)/n · tr(S(S+λ̃I)⁻¹S(S+λ̃I)⁻¹)`.

use serde::{Deserialize, Serialize};

use crate::bounds::ridge_risk_upper;
use crate::ensembles::{gaussian_iid, CovarianceKind, DesignSpec, EntryLaw};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, sqrt_psd, svd, DenseMatrix, Svd};
use crate::mc::{summarize, Engine, Summary};
use crate::rng::{StreamKey, TrialRng};

/// Ridge estimator for a fixed design, prepared once from the SVD of `X`:
/// `B̂ = V diag(s / (s² + λ)) Uᵀ Y`.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    svd: Svd,
    lambda: f64,
    n: usize,
    p: usize,
}

impl RidgeSolver {
    pub fn new(x: &DenseMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("ridge penalty must be > 0, got {lambda}")));
        }
        Ok(Self {
            svd: svd(x)?,
            lambda,
            n: x.rows(),
            p: x.cols(),
        })
    }

    pub fn fit(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        if y.rows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} response rows", self.n),
                found: format!("{}", y.rows()),
            });
        }
        let Svd { u, s, v } = &self.svd;
        let mut coef = u.t_matmul(y)?;
        for (k, &sk) in s.iter().enumerate() {
            let w = sk / (sk * sk + self.lambda);
            coef.row_mut(k).iter_mut().for_each(|c| *c *= w);
        }
        let out = v.matmul(&coef)?;
        debug_assert_eq!(out.shape(), (self.p, y.cols()));
        Ok(out)
    }
}

/// `(XᵀX + λI)⁻¹ XᵀY`.
pub fn ridge_fit(x: &DenseMatrix, y: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    RidgeSolver::new(x, lambda)?.fit(y)
}

/// A design, true coefficients, noise covariance and penalty.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    x: DenseMatrix,
    b: DenseMatrix,
    sigma_eps: DenseMatrix,
    sigma_eps_sqrt: DenseMatrix,
    lambda: f64,
}

impl RidgeProblem {
    /// `sigma_eps` may be any symmetric PSD `q x q` matrix, including zero.
    pub fn new(x: DenseMatrix, b: DenseMatrix, sigma_eps: DenseMatrix, lambda: f64) -> Result<Self> {
        x.check_finite()?;
        b.check_finite()?;
        if b.rows() != x.cols() {
            return Err(Error::DimensionMismatch {
                expected: format!("B with {} rows", x.cols()),
                found: format!("{} rows", b.rows()),
            });
        }
        if sigma_eps.shape() != (b.cols(), b.cols()) {
            return Err(Error::DimensionMismatch {
                expected: format!("{0}x{0} noise covariance", b.cols()),
                found: format!("{}x{}", sigma_eps.rows(), sigma_eps.cols()),
            });
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("ridge penalty must be > 0, got {lambda}")));
        }
        let sigma_eps_sqrt = sqrt_psd(&sigma_eps)?;
        Ok(Self {
            x,
            b,
            sigma_eps,
            sigma_eps_sqrt,
            lambda,
        })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn sigma_eps(&self) -> &DenseMatrix {
        &self.sigma_eps
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `λ / n`.
    pub fn lambda_tilde(&self) -> f64 {
        self.lambda / self.x.rows() as f64
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn q(&self) -> usize {
        self.b.cols()
    }

    /// Noise matrix with i.i.d. `N(0, Σ_ε)` rows.
    pub fn draw_noise(&self, rng: &mut TrialRng) -> Result<DenseMatrix> {
        gaussian_iid(self.n(), self.q(), rng).matmul(&self.sigma_eps_sqrt)
    }
}

/// Conditional prediction risk and its upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskReport {
    pub bias_term: f64,
    pub variance_term: f64,
    pub total: f64,
    pub bias_upper: f64,
    pub variance_upper: f64,
}

/// Evaluates both risk terms in the eigenbasis of `S` (from the SVD of `X`).
pub fn exact_conditional_risk(problem: &RidgeProblem) -> Result<RiskReport> {
    let (n, p) = problem.x.shape();
    let lt = problem.lambda_tilde();
    let Svd { s, v, .. } = svd(&problem.x)?;
    let eig: Vec<f64> = s.iter().map(|sk| sk * sk / n as f64).collect();
    // rows of VᵀB: coordinates of B along each eigenvector
    let vb = v.t_matmul(&problem.b)?;
    let mut bias = 0.0;
    let mut spectral = 0.0;
    for (k, &l) in eig.iter().enumerate() {
        let d = (l + lt) * (l + lt);
        let row = vb.row(k);
        bias += l / d * dot(row, row);
        spectral += l * l / d;
    }
    let bias_term = lt * lt * bias;
    let trace_eps = problem.sigma_eps.trace();
    let variance_term = trace_eps / n as f64 * spectral;
    let lambda_max = eig.first().copied().unwrap_or(0.0);
    let lambda_min = if p > n {
        0.0
    } else {
        eig.last().copied().unwrap_or(0.0)
    };
    let b_sq = problem.b.frobenius_norm().powi(2);
    let (bias_upper, variance_upper) =
        ridge_risk_upper(lt, b_sq, p, trace_eps.max(0.0), n, lambda_max, lambda_min)?;
    Ok(RiskReport {
        bias_term,
        variance_term,
        total: bias_term + variance_term,
        bias_upper,
        variance_upper,
    })
}

/// Brute-force conditional risk: hold `X` fixed, redraw the noise, refit and
/// average `(1/n)‖X(B̂ - B)‖_F²`.
pub fn mc_conditional_risk(
    problem: &RidgeProblem,
    error_trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<Summary> {
    if error_trials < 2 {
        return Err(invalid("mc_conditional_risk needs at least 2 error trials"));
    }
    let solver = RidgeSolver::new(&problem.x, problem.lambda)?;
    let signal = problem.x.matmul(&problem.b)?;
    let n = problem.n() as f64;
    let risks = engine.try_map(0..error_trials, |i| {
        let mut rng = StreamKey::new(master_seed, i).generator();
        let y = signal.add(&problem.draw_noise(&mut rng)?)?;
        let err = solver.fit(&y)?.sub(&problem.b)?;
        Ok(problem.x.matmul(&err)?.frobenius_norm().powi(2) / n)
    })?;
    Ok(summarize(&risks))
}

/// How the true coefficient matrix is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BSpec {
    /// Every entry equal to `b0`.
    Fixed { b0: f64 },
    /// I.i.d. `N(0, α²/(pq))` entries, redrawn for each design.
    Random { alpha: f64 },
}

impl BSpec {
    pub fn draw(&self, p: usize, q: usize, rng: &mut TrialRng) -> DenseMatrix {
        match *self {
            BSpec::Fixed { b0 } => DenseMatrix::from_fn(p, q, |_, _| b0),
            BSpec::Random { alpha } => {
                let sd = alpha / ((p * q) as f64).sqrt();
                DenseMatrix::from_fn(p, q, |_, _| sd * rng.standard_normal())
            }
        }
    }

    /// `E‖B‖_F²`.
    pub fn expected_frobenius_sq(&self, p: usize, q: usize) -> f64 {
        match *self {
            BSpec::Fixed { b0 } => b0 * b0 * (p * q) as f64,
            BSpec::Random { alpha } => alpha * alpha,
        }
    }
}

/// Mean conditional risk over random designs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRisk {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub design_trials: u64,
    pub bias: f64,
    pub variance: f64,
    pub total: f64,
    pub stderr: f64,
    pub bias_upper: f64,
    pub variance_upper: f64,
    /// `λ̃² E‖B‖_F² + tr(Σ_ε) p / n`, the shape of the mean-risk bound.
    pub reference: f64,
}

impl MeanRisk {
    pub const CSV_HEADER: &'static str =
        "n,p,q,lambda,lambda_tilde,bias,variance,total,bias_upper,variance_upper";

    pub fn csv_record(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.p,
            self.q,
            self.lambda,
            self.lambda_tilde,
            self.bias,
            self.variance,
            self.total,
            self.bias_upper,
            self.variance_upper
        )
    }

    /// `total / reference`.
    pub fn ratio(&self) -> f64 {
        self.total / self.reference
    }
}

/// Configuration of a mean-risk experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRiskSetup {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub lambda: f64,
    pub covariance: CovarianceKind,
    /// Noise covariance; `None` means the `q x q` identity.
    pub sigma_eps: Option<DenseMatrix>,
    pub b_spec: BSpec,
}

/// Outer Monte Carlo over designs of the exact conditional risk. The inner
/// expectation over the noise is closed-form, so no error draws are needed.
pub fn mean_risk_experiment(
    setup: &MeanRiskSetup,
    design_trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<MeanRisk> {
    if design_trials < 2 {
        return Err(invalid("mean_risk_experiment needs at least 2 design trials"));
    }
    let MeanRiskSetup { n, p, q, lambda, .. } = *setup;
    if q == 0 {
        return Err(invalid("q must be at least 1"));
    }
    let spec = DesignSpec::new(n, p, setup.covariance.clone(), EntryLaw::Gaussian)?;
    let sigma_eps = setup
        .sigma_eps
        .clone()
        .unwrap_or_else(|| DenseMatrix::identity(q));
    // validate once before fanning out
    RidgeProblem::new(
        DenseMatrix::zeros(n, p),
        DenseMatrix::zeros(p, q),
        sigma_eps.clone(),
        lambda,
    )?;
    let reports = engine.try_map(0..design_trials, |i| {
        let mut rng = StreamKey::new(master_seed, i).generator();
        let x = spec.sample(&mut rng)?;
        let b = setup.b_spec.draw(p, q, &mut rng);
        exact_conditional_risk(&RidgeProblem::new(x, b, sigma_eps.clone(), lambda)?)
    })?;
    let pick = |f: fn(&RiskReport) -> f64| summarize(&reports.iter().map(f).collect::<Vec<_>>());
    let total = pick(|r| r.total);
    let lambda_tilde = lambda / n as f64;
    Ok(MeanRisk {
        n,
        p,
        q,
        lambda,
        lambda_tilde,
        design_trials,
        bias: pick(|r| r.bias_term).mean,
        variance: pick(|r| r.variance_term).mean,
        total: total.mean,
        stderr: total.stderr,
        bias_upper: pick(|r| r.bias_upper).mean,
        variance_upper: pick(|r| r.variance_upper).mean,
        reference: lambda_tilde * lambda_tilde * setup.b_spec.expected_frobenius_sq(p, q)
            + sigma_eps.trace() * p as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> TrialRng {
        StreamKey::new(seed, 0).generator()
    }

    #[test]
    fn fit_examples() {
        let x = DenseMatrix::identity(2);
        let b = ridge_fit(&x, &DenseMatrix::identity(2), 1.0).unwrap();
        assert!(b.sub(&DenseMatrix::identity(2).scale(0.5)).unwrap().max_abs() < 1e-15);

        let x = gaussian_iid(30, 5, &mut rng(1));
        let zero = ridge_fit(&x, &DenseMatrix::zeros(30, 2), 0.3).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
        assert!(ridge_fit(&x, &DenseMatrix::zeros(30, 2), 0.0).is_err());
    }

    #[test]
    fn huge_penalty_shrinks_to_zero() {
        let x = gaussian_iid(30, 5, &mut rng(2));
        let y = gaussian_iid(30, 2, &mut rng(3));
        let smax = crate::linalg::spectral_norm(&x).unwrap();
        let lambda = 1e12 * smax * smax;
        let b = ridge_fit(&x, &y, lambda).unwrap();
        let xty = x.t_matmul(&y).unwrap().frobenius_norm();
        assert!(b.frobenius_norm() <= 2.0 * xty / lambda);
        assert!(b.frobenius_norm() <= 1e-6 * xty / (smax * smax));
    }

    #[test]
    fn fit_satisfies_normal_equations() {
        for &(n, p) in &[(40, 10), (10, 25), (60, 60)] {
            let x = gaussian_iid(n, p, &mut rng(n as u64));
            let y = gaussian_iid(n, 3, &mut rng(p as u64));
            let lambda = 0.7;
            let b = ridge_fit(&x, &y, lambda).unwrap();
            let lhs = x.t_matmul(&x.matmul(&b).unwrap()).unwrap().add(&b.scale(lambda)).unwrap();
            let rhs = x.t_matmul(&y).unwrap();
            let res = lhs.sub(&rhs).unwrap().frobenius_norm() / rhs.frobenius_norm();
            assert!(res < 1e-9, "{res}");
        }
    }

    #[test]
    fn zero_signal_zero_noise_has_zero_risk() {
        let x = gaussian_iid(20, 4, &mut rng(4));
        let pr = RidgeProblem::new(x, DenseMatrix::zeros(4, 2), DenseMatrix::zeros(2, 2), 1.0)
            .unwrap();
        let r = exact_conditional_risk(&pr).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn bias_vanishes_with_penalty() {
        let x = gaussian_iid(50, 10, &mut rng(5));
        let b = gaussian_iid(10, 3, &mut rng(6));
        let mut prev = f64::INFINITY;
        for lambda in [100.0, 10.0, 1.0, 0.1, 0.01, 1e-4] {
            let pr = RidgeProblem::new(x.clone(), b.clone(), DenseMatrix::identity(3), lambda)
                .unwrap();
            let r = exact_conditional_risk(&pr).unwrap();
            assert!(r.bias_term < prev);
            prev = r.bias_term;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn noiseless_mc_is_deterministic_bias() {
        let x = gaussian_iid(25, 6, &mut rng(7));
        let b = gaussian_iid(6, 2, &mut rng(8));
        let pr = RidgeProblem::new(x, b, DenseMatrix::zeros(2, 2), 3.0).unwrap();
        let mc = mc_conditional_risk(&pr, 50, 1, &Engine::serial()).unwrap();
        let exact = exact_conditional_risk(&pr).unwrap();
        assert_eq!(mc.stderr, 0.0);
        assert!((mc.mean - exact.bias_term).abs() < 1e-12 * exact.bias_term);
    }

    #[test]
    fn exact_matches_monte_carlo() {
        for &q in &[3usize, 1] {
            let x = gaussian_iid(50, 10, &mut rng(10 + q as u64));
            let b = gaussian_iid(10, q, &mut rng(20 + q as u64));
            let pr = RidgeProblem::new(x, b, DenseMatrix::identity(q), 5.0).unwrap();
            let exact = exact_conditional_risk(&pr).unwrap();
            let mc = mc_conditional_risk(&pr, 20_000, 99, &Engine::serial()).unwrap();
            assert!(
                (mc.mean - exact.total).abs() <= 3.0 * mc.stderr,
                "q={q}: {} vs {} ± {}",
                mc.mean,
                exact.total,
                mc.stderr
            );
            assert!(exact.bias_term <= exact.bias_upper);
            assert!(exact.variance_term <= exact.variance_upper);
        }
    }

    #[test]
    fn risk_is_rotation_invariant() {
        let x = gaussian_iid(30, 6, &mut rng(30));
        let b = gaussian_iid(6, 3, &mut rng(31));
        let q = crate::linalg::svd(&gaussian_iid(3, 3, &mut rng(32))).unwrap().u;
        let sigma = DenseMatrix::identity(3).scale(0.7);
        let a = exact_conditional_risk(&RidgeProblem::new(x.clone(), b.clone(), sigma.clone(), 2.0).unwrap())
            .unwrap();
        let bq = b.matmul(&q).unwrap();
        let r = exact_conditional_risk(&RidgeProblem::new(x, bq, sigma, 2.0).unwrap()).unwrap();
        assert!((a.total - r.total).abs() <= 1e-10 * a.total);
    }

    #[test]
    fn wide_designs_are_supported() {
        let x = gaussian_iid(8, 20, &mut rng(40));
        let b = gaussian_iid(20, 2, &mut rng(41));
        let pr = RidgeProblem::new(x, b, DenseMatrix::identity(2), 1.0).unwrap();
        let r = exact_conditional_risk(&pr).unwrap();
        assert!(r.bias_term <= r.bias_upper && r.variance_term <= r.variance_upper);
        let mc = mc_conditional_risk(&pr, 20_000, 5, &Engine::serial()).unwrap();
        assert!((mc.mean - r.total).abs() <= 3.0 * mc.stderr);
    }

    #[test]
    fn scalar_mean_risk_is_noise_over_n() {
        let setup = MeanRiskSetup {
            n: 1000,
            p: 1,
            q: 1,
            lambda: 1e-8,
            covariance: CovarianceKind::Identity,
            sigma_eps: None,
            b_spec: BSpec::Fixed { b0: 1.0 },
        };
        let m = mean_risk_experiment(&setup, 20, 3, &Engine::serial()).unwrap();
        assert!((m.total * 1000.0 - 1.0).abs() < 1e-6, "{}", m.total);
    }

    #[test]
    fn pure_variance_halves_when_n_doubles() {
        let mk = |n| MeanRiskSetup {
            n,
            p: 10,
            q: 2,
            lambda: 1.0,
            covariance: CovarianceKind::Identity,
            sigma_eps: None,
            b_spec: BSpec::Fixed { b0: 0.0 },
        };
        let a = mean_risk_experiment(&mk(400), 50, 1, &Engine::serial()).unwrap();
        let b = mean_risk_experiment(&mk(800), 50, 1, &Engine::serial()).unwrap();
        assert_eq!(a.bias, 0.0);
        let ratio = b.total / a.total;
        assert!((0.4..=0.6).contains(&ratio), "{ratio}");
    }

    #[test]
    fn problem_validation() {
        let x = DenseMatrix::zeros(5, 3);
        assert!(RidgeProblem::new(x.clone(), DenseMatrix::zeros(2, 1), DenseMatrix::identity(1), 1.0).is_err());
        assert!(RidgeProblem::new(x.clone(), DenseMatrix::zeros(3, 2), DenseMatrix::identity(1), 1.0).is_err());
        assert!(RidgeProblem::new(x.clone(), DenseMatrix::zeros(3, 1), DenseMatrix::identity(1), -1.0).is_err());
        let neg = DenseMatrix::from_diag(&[-1.0]);
        assert!(RidgeProblem::new(x, DenseMatrix::zeros(3, 1), neg, 1.0).is_err());
    }
}
