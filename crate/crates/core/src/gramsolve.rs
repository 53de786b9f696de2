//! Gradient descent and conjugate gradient on Gram systems `S θ = b`.
//!
//! For `g(θ) = ½ θᵀSθ - bᵀθ` and `b ∈ range(S)`, the gap to the minimum-norm
//! solution `θ* = S⁺b` is `g(θ) - g(θ*) = ½ eᵀSe` with `e = θ - θ*`. Traces
//! record that quantity. With step `1/L`, each step contracts the gap by at
//! most `(1 - μ/L)²`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::{gd_iteration_upper, gd_worstcase_lower};
use crate::ensembles::{gram, DesignSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, default_rank_tol, dot, norm2, svd, sym_eig, DenseMatrix};
use crate::mc::{grid_dimension, summarize, Engine};
use crate::rng::{StreamKey, TrialRng};

/// Default iteration cap.
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;
/// Allowed relative distance of `b` from `range(S)`.
pub const RANGE_TOL: f64 = 1e-8;

/// How the right-hand side is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BMode {
    /// `b = S w` with `w ~ N(0, I_p)`.
    RandomInRange,
    /// `b = Xᵀy / n` with `y ~ N(0, I_n)`.
    FromRegression,
}

/// A Gram system with its range eigenpairs.
#[derive(Debug, Clone)]
pub struct GramSystem {
    s: DenseMatrix,
    b: Vec<f64>,
    /// Nonzero eigenvalues, non-increasing.
    eigvals: Vec<f64>,
    /// `p x rank`; column `k` pairs with `eigvals[k]`.
    basis: DenseMatrix,
    theta_star: Vec<f64>,
}

impl GramSystem {
    /// From a symmetric PSD matrix and a right-hand side in its range.
    pub fn new(s: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let p = s.rows();
        let eig = sym_eig(&s)?;
        let lmax = eig.values.first().copied().unwrap_or(0.0);
        let tol = default_rank_tol(p, p, lmax.max(0.0));
        if eig.values.last().is_some_and(|&l| l < -tol) {
            return Err(Error::NotPsd {
                min_eigenvalue: *eig.values.last().unwrap_or(&0.0),
            });
        }
        let rank = eig.values.iter().take_while(|&&l| l > tol).count();
        let basis = DenseMatrix::from_fn(p, rank, |i, k| eig.vectors[(k, i)]);
        Self::assemble(s, b, eig.values[..rank].to_vec(), basis)
    }

    /// From a design: `S = XᵀX/n`, eigenpairs from the SVD of `X`.
    pub fn from_design(x: &DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        let d = svd(x)?;
        let tol = default_rank_tol(n, p, d.s.first().copied().unwrap_or(0.0));
        let rank = d.s.iter().take_while(|&&v| v > tol).count();
        let eigvals = d.s[..rank].iter().map(|v| v * v / n as f64).collect();
        let basis = DenseMatrix::from_fn(p, rank, |i, k| d.v[(i, k)]);
        Self::assemble(gram(x), b, eigvals, basis)
    }

    fn assemble(s: DenseMatrix, b: Vec<f64>, eigvals: Vec<f64>, basis: DenseMatrix) -> Result<Self> {
        if b.len() != s.rows() {
            return Err(Error::DimensionMismatch {
                expected: format!("right-hand side of length {}", s.rows()),
                found: format!("{}", b.len()),
            });
        }
        if eigvals.is_empty() {
            return Err(invalid("Gram matrix has rank 0"));
        }
        let coords = basis.t_matvec(&b)?;
        let projected = basis.matvec(&coords)?;
        let off: Vec<f64> = b.iter().zip(&projected).map(|(x, y)| x - y).collect();
        let bn = norm2(&b);
        if norm2(&off) > RANGE_TOL * bn {
            return Err(invalid(format!(
                "b is outside range(S): residual {:.3e} relative",
                norm2(&off) / bn
            )));
        }
        let scaled: Vec<f64> = coords.iter().zip(&eigvals).map(|(c, l)| c / l).collect();
        let theta_star = basis.matvec(&scaled)?;
        Ok(Self {
            s,
            b,
            eigvals,
            basis,
            theta_star,
        })
    }

    pub fn s(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.s.rows()
    }

    /// `λ_max(S)`.
    pub fn l(&self) -> f64 {
        self.eigvals[0]
    }

    /// Smallest nonzero eigenvalue.
    pub fn mu(&self) -> f64 {
        self.eigvals[self.eigvals.len() - 1]
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    /// `√(L/μ)`, the condition number of the underlying design.
    pub fn kappa(&self) -> f64 {
        (self.l() / self.mu()).sqrt()
    }

    /// Unit eigenvector for `μ`.
    pub fn v_min(&self) -> Vec<f64> {
        self.basis.column(self.rank() - 1)
    }

    /// `g(θ) = ½ θᵀSθ - bᵀθ`.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let s_theta = self.s.matvec(theta).expect("dimension checked by caller");
        0.5 * dot(theta, &s_theta) - dot(&self.b, theta)
    }

    /// `½ eᵀSe` with `e = θ - θ*`.
    pub fn gap(&self, theta: &[f64]) -> f64 {
        let e: Vec<f64> = theta.iter().zip(&self.theta_star).map(|(a, b)| a - b).collect();
        let se = self.s.matvec(&e).expect("dimension checked by caller");
        0.5 * dot(&e, &se).max(0.0)
    }

    /// Gap attributable to rounding in `θ` alone; starts below it count as
    /// converged.
    fn gap_floor(&self, theta: &[f64]) -> f64 {
        let scale = norm2(theta).max(norm2(&self.theta_star));
        let e = 16.0 * (self.dim() as f64).sqrt() * f64::EPSILON * scale;
        0.5 * self.l() * e * e
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: format!("vector of length {}", self.dim()),
                found: format!("{}", v.len()),
            })
        }
    }
}

/// `S = gram(X)` and a right-hand side drawn per `b_mode`.
pub fn make_system(x: &DenseMatrix, b_mode: BMode, rng: &mut TrialRng) -> Result<GramSystem> {
    x.check_finite()?;
    let (n, p) = x.shape();
    let b = match b_mode {
        BMode::RandomInRange => {
            let w: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
            let xw = x.matvec(&w)?;
            x.t_matvec(&xw)?.into_iter().map(|v| v / n as f64).collect()
        }
        BMode::FromRegression => {
            let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            x.t_matvec(&y)?.into_iter().map(|v| v / n as f64).collect()
        }
    };
    GramSystem::from_design(x, b)
}

/// Orthogonal projection onto `range(S)`.
pub fn range_project(system: &GramSystem, theta: &[f64]) -> Result<Vec<f64>> {
    system.check_len(theta)?;
    let coords = system.basis.t_matvec(theta)?;
    system.basis.matvec(&coords)
}

/// `S⁺ b`.
pub fn pinv_solution(system: &GramSystem) -> Vec<f64> {
    system.theta_star.clone()
}

/// `θ* + α v_min`.
pub fn worst_case_init(system: &GramSystem, alpha: f64) -> Result<Vec<f64>> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be finite and nonzero, got {alpha}")));
    }
    let mut theta = system.theta_star.clone();
    axpy(alpha, &system.v_min(), &mut theta);
    Ok(theta)
}

/// Gap history of an iterative solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GdTrace {
    /// `g(θᵗ) - g(θ*)` for `t = 0 ..= t_epsilon`.
    pub iterates_gap: Vec<f64>,
    /// First `t` with `gap_t <= ε gap_0`, or `max_iter` when censored.
    pub t_epsilon: u64,
    pub censored: bool,
    /// `1 - μ/L`.
    pub q_factor: f64,
    /// `1/L` for gradient descent; `NaN` for conjugate gradient.
    pub step_size: f64,
    pub theta: Vec<f64>,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")))
    }
}

/// Gradient descent with step `1/L` from the projection of `theta0` onto
/// `range(S)`.
pub fn gd_solve(system: &GramSystem, theta0: &[f64], epsilon: f64, max_iter: u64) -> Result<GdTrace> {
    gd_run(system, theta0, epsilon, max_iter, None)
}

/// [`gd_solve`] that also returns every iterate `θ⁰ ..= θᵀ`.
pub fn gd_solve_recorded(
    system: &GramSystem,
    theta0: &[f64],
    epsilon: f64,
    max_iter: u64,
) -> Result<(GdTrace, Vec<Vec<f64>>)> {
    let mut iterates = Vec::new();
    let trace = gd_run(system, theta0, epsilon, max_iter, Some(&mut iterates))?;
    Ok((trace, iterates))
}

fn gd_run(
    system: &GramSystem,
    theta0: &[f64],
    epsilon: f64,
    max_iter: u64,
    mut record: Option<&mut Vec<Vec<f64>>>,
) -> Result<GdTrace> {
    check_epsilon(epsilon)?;
    let mut theta = range_project(system, theta0)?;
    let eta = 1.0 / system.l();
    let gap0 = system.gap(&theta);
    let mut gaps = vec![gap0];
    if let Some(rec) = record.as_deref_mut() {
        rec.push(theta.clone());
    }
    let mut t = 0;
    let mut converged = gap0 <= system.gap_floor(&theta);
    while !converged && t < max_iter {
        let mut grad = system.s.matvec(&theta)?;
        for (g, b) in grad.iter_mut().zip(&system.b) {
            *g -= b;
        }
        axpy(-eta, &grad, &mut theta);
        t += 1;
        let gap = system.gap(&theta);
        gaps.push(gap);
        if let Some(rec) = record.as_deref_mut() {
            rec.push(theta.clone());
        }
        converged = gap <= epsilon * gap0;
    }
    Ok(GdTrace {
        iterates_gap: gaps,
        t_epsilon: t,
        censored: !converged,
        q_factor: 1.0 - system.mu() / system.l(),
        step_size: eta,
        theta,
    })
}

/// Iteration count of gradient descent computed in the eigenbasis of `S`,
/// where each coordinate of the error contracts by `1 - λ_k/L` per step.
/// Returns `(t_epsilon, censored)`.
pub fn gd_iterations_eigen(
    system: &GramSystem,
    theta0: &[f64],
    epsilon: f64,
    max_iter: u64,
) -> Result<(u64, bool)> {
    check_epsilon(epsilon)?;
    system.check_len(theta0)?;
    let e: Vec<f64> = theta0.iter().zip(&system.theta_star).map(|(a, b)| a - b).collect();
    let coords = system.basis.t_matvec(&e)?;
    let l = system.l();
    // (weight ½λc², per-step factor (1 - λ/L)²), dropping exact zeros
    let mut terms: Vec<(f64, f64)> = coords
        .iter()
        .zip(&system.eigvals)
        .map(|(c, &lam)| (0.5 * lam * c * c, (1.0 - lam / l).powi(2)))
        .filter(|&(w, _)| w > 0.0)
        .collect();
    let gap0: f64 = terms.iter().map(|t| t.0).sum();
    if gap0 == 0.0 {
        return Ok((0, false));
    }
    let target = epsilon * gap0;
    let mut t = 0;
    while t < max_iter {
        t += 1;
        let mut gap = 0.0;
        for term in terms.iter_mut() {
            term.0 *= term.1;
            gap += term.0;
        }
        if gap <= target {
            return Ok((t, false));
        }
        terms.retain(|term| term.0 > 0.0);
    }
    Ok((max_iter, true))
}

/// Conjugate gradient from the projection of `theta0` onto `range(S)`.
pub fn cg_solve(system: &GramSystem, theta0: &[f64], epsilon: f64, max_iter: u64) -> Result<GdTrace> {
    check_epsilon(epsilon)?;
    let mut theta = range_project(system, theta0)?;
    let gap0 = system.gap(&theta);
    let mut gaps = vec![gap0];
    let mut r: Vec<f64> = system
        .b
        .iter()
        .zip(system.s.matvec(&theta)?)
        .map(|(b, st)| b - st)
        .collect();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    let mut t = 0;
    let mut converged = gap0 <= system.gap_floor(&theta);
    while !converged && t < max_iter {
        let sd = system.s.matvec(&d)?;
        let dsd = dot(&d, &sd);
        if !(dsd > 0.0) {
            break;
        }
        let alpha = rr / dsd;
        axpy(alpha, &d, &mut theta);
        axpy(-alpha, &sd, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (di, ri) in d.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
        t += 1;
        let gap = system.gap(&theta);
        gaps.push(gap);
        converged = gap <= epsilon * gap0;
    }
    Ok(GdTrace {
        iterates_gap: gaps,
        t_epsilon: t,
        censored: !converged,
        q_factor: 1.0 - system.mu() / system.l(),
        step_size: f64::NAN,
        theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Gd,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Projection of a standard Gaussian vector onto `range(S)`.
    Random,
    /// `θ* + v_min`.
    Worstcase,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Gd => "gd",
            Solver::Cg => "cg",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gd" => Ok(Solver::Gd),
            "cg" => Ok(Solver::Cg),
            other => Err(invalid(format!("unknown solver '{other}' (expected gd or cg)"))),
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Random => "random",
            InitMode::Worstcase => "worstcase",
        })
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random" => Ok(InitMode::Random),
            "worstcase" | "worst_case" | "worst-case" => Ok(InitMode::Worstcase),
            other => Err(invalid(format!(
                "unknown init '{other}' (expected random or worstcase)"
            ))),
        }
    }
}

/// One instance of the complexity experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityInstance {
    pub t: u64,
    pub censored: bool,
    pub kappa: f64,
    pub upper_bound: f64,
    pub lower_bound: u64,
}

/// Starting point for `init`, drawn from `rng` when random.
pub fn initial_point(system: &GramSystem, init: InitMode, rng: &mut TrialRng) -> Result<Vec<f64>> {
    match init {
        InitMode::Random => {
            let z: Vec<f64> = (0..system.dim()).map(|_| rng.standard_normal()).collect();
            range_project(system, &z)
        }
        InitMode::Worstcase => worst_case_init(system, 1.0),
    }
}

/// Draws a Gaussian `n x p` design, builds its Gram system and measures the
/// iteration count. Gradient descent runs in the eigenbasis.
pub fn complexity_instance(
    n: usize,
    p: usize,
    epsilon: f64,
    solver: Solver,
    init: InitMode,
    max_iter: u64,
    rng: &mut TrialRng,
) -> Result<ComplexityInstance> {
    let x = DesignSpec::gaussian(n, p)?.sample(rng)?;
    let system = make_system(&x, BMode::RandomInRange, rng)?;
    let theta0 = initial_point(&system, init, rng)?;
    let (t, censored) = match solver {
        Solver::Gd => gd_iterations_eigen(&system, &theta0, epsilon, max_iter)?,
        Solver::Cg => {
            let tr = cg_solve(&system, &theta0, epsilon, max_iter)?;
            (tr.t_epsilon, tr.censored)
        }
    };
    let kappa = system.kappa();
    Ok(ComplexityInstance {
        t,
        censored,
        kappa,
        upper_bound: gd_iteration_upper(kappa.max(1.0), epsilon)?,
        lower_bound: gd_worstcase_lower(system.l(), system.mu(), epsilon)?,
    })
}

/// Aggregated iteration counts at one aspect ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub n: usize,
    pub p: usize,
    pub gamma: f64,
    pub solver: Solver,
    pub init: InitMode,
    pub epsilon: f64,
    pub trials: u64,
    /// Censored runs count as `max_iter`, so this is a lower bound on the
    /// true mean whenever `censored_fraction > 0`.
    pub mean_t: f64,
    pub stderr_t: f64,
    pub mean_upper_bound: f64,
    pub mean_lower_bound: f64,
    pub censored_fraction: f64,
    /// Uncensored runs with `T > κ² log(1/ε) + 1`.
    pub upper_violations: u64,
    /// Runs with `T` below the worst-case lower bound (worst-case init only).
    pub lower_violations: u64,
}

impl ComplexityRow {
    pub const CSV_HEADER: &'static str = "n,p,gamma,solver,init,epsilon,trials,mean_T,stderr_T,mean_upper_bound,mean_lower_bound,censored_fraction";

    pub fn csv_record(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.p,
            self.gamma,
            self.solver,
            self.init,
            self.epsilon,
            self.trials,
            self.mean_t,
            self.stderr_t,
            self.mean_upper_bound,
            self.mean_lower_bound,
            self.censored_fraction
        )
    }
}

/// Settings shared by every grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexitySetup {
    pub epsilon: f64,
    pub trials: u64,
    pub solver: Solver,
    pub init: InitMode,
    pub max_iter: u64,
}

/// Mean iteration counts over a γ-grid. Grid position `g` uses trial indices
/// `g·trials .. (g+1)·trials`; rows come back sorted by γ.
pub fn complexity_experiment(
    n: usize,
    gamma_grid: &[f64],
    setup: &ComplexitySetup,
    master_seed: u64,
    engine: &Engine,
) -> Result<Vec<ComplexityRow>> {
    check_epsilon(setup.epsilon)?;
    if setup.trials < 2 {
        return Err(invalid("complexity_experiment needs at least 2 trials"));
    }
    if setup.max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    let dims = gamma_grid
        .iter()
        .map(|&g| grid_dimension(n, g))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(dims.len());
    for (g, &p) in dims.iter().enumerate() {
        let offset = g as u64 * setup.trials;
        let runs = engine.try_map(offset..offset + setup.trials, |i| {
            let mut rng = StreamKey::new(master_seed, i).generator();
            complexity_instance(n, p, setup.epsilon, setup.solver, setup.init, setup.max_iter, &mut rng)
        })?;
        let ts: Vec<f64> = runs.iter().map(|r| r.t as f64).collect();
        let t_sum = summarize(&ts);
        let ups: Vec<f64> = runs.iter().map(|r| r.upper_bound).collect();
        let lows: Vec<f64> = runs.iter().map(|r| r.lower_bound as f64).collect();
        let censored = runs.iter().filter(|r| r.censored).count();
        let check_lower = setup.solver == Solver::Gd && setup.init == InitMode::Worstcase;
        rows.push(ComplexityRow {
            n,
            p,
            gamma: p as f64 / n as f64,
            solver: setup.solver,
            init: setup.init,
            epsilon: setup.epsilon,
            trials: setup.trials,
            mean_t: t_sum.mean,
            stderr_t: t_sum.stderr,
            mean_upper_bound: summarize(&ups).mean,
            mean_lower_bound: summarize(&lows).mean,
            censored_fraction: censored as f64 / setup.trials as f64,
            upper_violations: runs
                .iter()
                .filter(|r| setup.solver == Solver::Gd && !r.censored && r.t as f64 > r.upper_bound)
                .count() as u64,
            lower_violations: runs
                .iter()
                .filter(|r| check_lower && !r.censored && r.t < r.lower_bound)
                .count() as u64,
        });
    }
    rows.sort_by_key(|r| r.p);
    Ok(rows)
}
