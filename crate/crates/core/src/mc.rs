//! Reproducible Monte Carlo: moment and tail estimates, γ-sweeps,
//! divergence diagnostics and the Inverse-χ² distributional check.
//!
//! Trial `i` always draws from `StreamKey(master_seed, i)`. Trials may run on
//! any number of workers; results are gathered in trial order and reduced
//! with pairwise summation, so estimates are bitwise independent of the
//! worker count.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covest::{errors_of_design, CovTarget};
use crate::ensembles::{CovarianceKind, DesignSpec, EntryLaw};
use crate::error::{invalid, Error, Result};
use crate::linalg::{singular_values, svd, DenseMatrix};
use crate::rng::{StreamKey, TrialRng};
use crate::special::inverse_chi_squared_cdf;

/// Overflowed trials above this fraction mark an estimate unreliable.
pub const OVERFLOW_THRESHOLD: f64 = 0.01;
/// Asymptotic Kolmogorov–Smirnov coefficient at the 1% level.
pub const KS_COEFF_1PCT: f64 = 1.628;

/// Runs independent trials, serially or on a thread pool.
#[derive(Clone)]
pub struct Engine {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine").field("workers", &self.workers).finish()
    }
}

impl Default for Engine {
    fn default() -> Self {
        Self::serial()
    }
}

impl Engine {
    pub fn serial() -> Self {
        Self {
            workers: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `workers = 0` uses every available core. Without the `parallel`
    /// feature, everything runs on the calling thread.
    pub fn new(workers: usize) -> Result<Self> {
        let workers = if workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers
        };
        if workers == 1 {
            return Ok(Self::serial());
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| invalid(format!("cannot start {workers} workers: {e}")))?;
            Ok(Self {
                workers,
                pool: Some(std::sync::Arc::new(pool)),
            })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Self { workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(i)` for every trial index in `range`, returned in index order.
    pub fn map<T, F>(&self, range: Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| range.into_par_iter().map(&f).collect());
        }
        range.map(f).collect()
    }

    /// Like [`Engine::map`] for fallible trials; the first error in index
    /// order wins.
    pub fn try_map<T, F>(&self, range: Range<u64>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        self.map(range, f).into_iter().collect()
    }
}

/// Scalar statistic of one random design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `s_max / s_min`.
    Kappa,
    /// `√n / s_min`.
    SqrtNOverSmin,
    /// `s_max / √n`.
    SmaxOverSqrtN,
    /// `log κ`.
    LogKappa,
    /// `‖S⁻¹ - Σ⁻¹‖₂`.
    InvCovError,
    /// `‖S - Σ‖₂`.
    CovError,
}

impl Statistic {
    pub const ALL: [Statistic; 6] = [
        Self::Kappa,
        Self::SqrtNOverSmin,
        Self::SmaxOverSqrtN,
        Self::LogKappa,
        Self::InvCovError,
        Self::CovError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kappa => "kappa",
            Self::SqrtNOverSmin => "sqrt_n_over_smin",
            Self::SmaxOverSqrtN => "smax_over_sqrt_n",
            Self::LogKappa => "log_kappa",
            Self::InvCovError => "inv_cov_error",
            Self::CovError => "cov_error",
        }
    }

    fn needs_covariance(self) -> bool {
        matches!(self, Self::InvCovError | Self::CovError)
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|s| s.name()).collect();
                invalid(format!("unknown statistic '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Running mean after the first `trials` trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub trials: u64,
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `E[statisticʳ]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub statistic: String,
    pub r: f64,
    pub trials: u64,
    pub mean: f64,
    pub stderr: f64,
    /// Largest finite value.
    pub max_sample: f64,
    /// Trials whose value was not finite; excluded from the mean.
    pub overflow_count: u64,
    pub unreliable: bool,
    /// Checkpoints at 10, 100, 1000, … and at the final trial count.
    pub running_means: Vec<Checkpoint>,
}

impl MomentEstimate {
    /// Reduces per-trial values (already raised to the power `r`).
    pub fn from_values(statistic: &str, r: f64, values: &[f64]) -> Self {
        let trials = values.len() as u64;
        let mut finite = Vec::with_capacity(values.len());
        let mut running_means = Vec::new();
        let mut next = 10u64;
        for (i, &v) in values.iter().enumerate() {
            if v.is_finite() {
                finite.push(v);
            }
            let done = i as u64 + 1;
            if done == next || done == trials {
                let s = summarize(&finite);
                running_means.push(Checkpoint {
                    trials: done,
                    mean: s.mean,
                    stderr: s.stderr,
                });
                if done == next {
                    next = next.saturating_mul(10);
                }
            }
        }
        let s = summarize(&finite);
        let overflow_count = trials - finite.len() as u64;
        Self {
            statistic: statistic.to_string(),
            r,
            trials,
            mean: s.mean,
            stderr: s.stderr,
            max_sample: finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            overflow_count,
            unreliable: finite.len() < 2
                || overflow_count as f64 > OVERFLOW_THRESHOLD * trials as f64,
            running_means,
        }
    }

    /// Running mean recorded after exactly `trials` trials.
    pub fn checkpoint(&self, trials: u64) -> Option<&Checkpoint> {
        self.running_means.iter().find(|c| c.trials == trials)
    }

    pub fn overflow_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.overflow_count as f64 / self.trials as f64
        }
    }
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Two-pass mean / standard error with pairwise sums. Empty input gives a
/// NaN mean; a single value gives an infinite standard error.
pub fn summarize(xs: &[f64]) -> Summary {
    let count = xs.len();
    if count == 0 {
        return Summary {
            count,
            mean: f64::NAN,
            stderr: f64::NAN,
        };
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Summary {
            count,
            mean: xs[0],
            stderr: if count == 1 { f64::INFINITY } else { 0.0 },
        };
    }
    let mean = pairwise_sum(xs) / count as f64;
    if count == 1 {
        return Summary {
            count,
            mean,
            stderr: f64::INFINITY,
        };
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (count - 1) as f64;
    Summary {
        count,
        mean,
        stderr: (var / count as f64).sqrt(),
    }
}

/// Pairwise (cascade) summation in slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Per-estimate context shared by all trials.
struct Sampler<'a> {
    spec: &'a DesignSpec,
    statistics: Vec<Statistic>,
    target: Option<CovTarget>,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a DesignSpec, statistics: &[Statistic]) -> Result<Self> {
        if statistics.is_empty() {
            return Err(invalid("no statistic requested"));
        }
        if statistics.contains(&Statistic::InvCovError) && spec.p > spec.n {
            return Err(invalid(format!(
                "inv_cov_error requires p <= n (n={}, p={})",
                spec.n, spec.p
            )));
        }
        let target = if statistics.iter().any(|s| s.needs_covariance()) {
            Some(CovTarget::new(spec)?)
        } else {
            None
        };
        Ok(Self {
            spec,
            statistics: statistics.to_vec(),
            target,
        })
    }

    /// One design, every requested statistic.
    fn draw(&self, rng: &mut TrialRng) -> Result<Vec<f64>> {
        let x = self.spec.sample(rng)?;
        let errors = match &self.target {
            Some(t) => Some(errors_of_design(&x, t)?),
            None => None,
        };
        let spectrum = if self.statistics.iter().all(|s| s.needs_covariance()) {
            None
        } else {
            Some(singular_values(&x)?)
        };
        Ok(self
            .statistics
            .iter()
            .map(|&st| match (st, &errors, &spectrum) {
                (Statistic::CovError, Some(e), _) => e.forward_error,
                (Statistic::InvCovError, Some(e), _) => e.inverse_error,
                (_, _, Some(s)) => spectral_statistic(st, s, x.rows()),
                _ => unreachable!("sampler prepared for every statistic"),
            })
            .collect())
    }
}

/// Evaluates a singular-value statistic on a fixed design.
pub fn extreme_statistic(statistic: Statistic, x: &DenseMatrix) -> Result<f64> {
    if statistic.needs_covariance() {
        return Err(invalid(format!("{statistic} needs a population covariance")));
    }
    Ok(spectral_statistic(statistic, &singular_values(x)?, x.rows()))
}

fn spectral_statistic(statistic: Statistic, s: &[f64], n: usize) -> f64 {
    let s_max = s[0];
    let s_min = s[s.len() - 1];
    let sqrt_n = (n as f64).sqrt();
    match statistic {
        Statistic::Kappa => kappa_of(s_max, s_min),
        Statistic::LogKappa => kappa_of(s_max, s_min).ln(),
        Statistic::SqrtNOverSmin => sqrt_n / s_min,
        Statistic::SmaxOverSqrtN => s_max / sqrt_n,
        Statistic::InvCovError | Statistic::CovError => f64::NAN,
    }
}

fn kappa_of(s_max: f64, s_min: f64) -> f64 {
    if s_max == s_min {
        1.0
    } else {
        s_max / s_min
    }
}

fn check_trials(trials: u64, min: u64) -> Result<()> {
    if trials < min {
        Err(invalid(format!("need at least {min} trials, got {trials}")))
    } else {
        Ok(())
    }
}

/// Raw statistic values for trial indices `offset .. offset + trials`.
pub fn sample_statistic(
    spec: &DesignSpec,
    statistic: Statistic,
    trials: u64,
    master_seed: u64,
    offset: u64,
    engine: &Engine,
) -> Result<Vec<f64>> {
    let sampler = Sampler::new(spec, &[statistic])?;
    engine.try_map(offset..offset + trials, |i| {
        Ok(sampler.draw(&mut StreamKey::new(master_seed, i).generator())?[0])
    })
}

fn moment_from_samples(statistic: Statistic, r: f64, samples: &[f64]) -> MomentEstimate {
    let values: Vec<f64> = if r == 1.0 {
        samples.to_vec()
    } else {
        samples.iter().map(|v| v.powf(r)).collect()
    };
    MomentEstimate::from_values(statistic.name(), r, &values)
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("moment order r must be > 0, got {r}")))
    }
}

/// `E[statisticʳ]` over `trials` independent designs.
pub fn estimate_moment(
    spec: &DesignSpec,
    statistic: Statistic,
    r: f64,
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<MomentEstimate> {
    estimate_moment_at(spec, statistic, r, trials, master_seed, 0, engine)
}

/// Several statistics from the same designs. Each estimate equals what
/// [`estimate_moment`] returns for that statistic alone.
pub fn estimate_moments(
    spec: &DesignSpec,
    statistics: &[Statistic],
    r: f64,
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<Vec<MomentEstimate>> {
    check_trials(trials, 2)?;
    check_r(r)?;
    let sampler = Sampler::new(spec, statistics)?;
    let draws = engine.try_map(0..trials, |i| {
        sampler.draw(&mut StreamKey::new(master_seed, i).generator())
    })?;
    Ok(statistics
        .iter()
        .enumerate()
        .map(|(k, &st)| {
            let column: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            moment_from_samples(st, r, &column)
        })
        .collect())
}

/// [`estimate_moment`] over trial indices starting at `offset`.
pub fn estimate_moment_at(
    spec: &DesignSpec,
    statistic: Statistic,
    r: f64,
    trials: u64,
    master_seed: u64,
    offset: u64,
    engine: &Engine,
) -> Result<MomentEstimate> {
    check_trials(trials, 2)?;
    check_r(r)?;
    let samples = sample_statistic(spec, statistic, trials, master_seed, offset, engine)?;
    Ok(moment_from_samples(statistic, r, &samples))
}

/// One grid point of a γ-sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub p: usize,
    pub gamma: f64,
    pub estimate: MomentEstimate,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "n,p,gamma,statistic,r,trials,mean,stderr,max_sample,overflow_count";

    pub fn csv_record(&self) -> String {
        let e = &self.estimate;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.p,
            self.gamma,
            e.statistic,
            e.r,
            e.trials,
            e.mean,
            e.stderr,
            e.max_sample,
            e.overflow_count
        )
    }
}

/// Rounds `γ n` to the dimension used for that grid point.
pub fn grid_dimension(n: usize, gamma: f64) -> Result<usize> {
    let p = (gamma * n as f64).round();
    if !(gamma > 0.0) || !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("gamma {gamma} gives no dimension p >= 1 at n={n}")));
    }
    Ok(p as usize)
}

/// Gaussian identity-covariance sweep over aspect ratios.
pub fn sweep_gamma(
    n: usize,
    gamma_grid: &[f64],
    statistic: Statistic,
    r: f64,
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<Vec<SweepRow>> {
    sweep_gamma_design(
        n,
        gamma_grid,
        &CovarianceKind::Identity,
        EntryLaw::Gaussian,
        statistic,
        r,
        trials,
        master_seed,
        engine,
    )
}

/// γ-sweep for any covariance family and entry law. Grid position `g` uses
/// trial indices `g·trials .. (g+1)·trials`; rows come back sorted by γ.
#[allow(clippy::too_many_arguments)]
pub fn sweep_gamma_design(
    n: usize,
    gamma_grid: &[f64],
    covariance: &CovarianceKind,
    law: EntryLaw,
    statistic: Statistic,
    r: f64,
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<Vec<SweepRow>> {
    let dims = gamma_grid
        .iter()
        .map(|&g| grid_dimension(n, g))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(dims.len());
    for (g, &p) in dims.iter().enumerate() {
        let spec = DesignSpec::new(n, p, covariance.clone(), law)?;
        let estimate =
            estimate_moment_at(&spec, statistic, r, trials, master_seed, g as u64 * trials, engine)?;
        rows.push(SweepRow {
            n,
            p,
            gamma: p as f64 / n as f64,
            estimate,
        });
    }
    rows.sort_by_key(|row| row.p);
    Ok(rows)
}

/// Empirical exceedance probability `P(statistic >= threshold)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    pub threshold: f64,
    pub probability: f64,
    pub stderr: f64,
}

pub fn tail_estimate(
    spec: &DesignSpec,
    statistic: Statistic,
    thresholds: &[f64],
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<Vec<TailPoint>> {
    check_trials(trials, 100)?;
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(invalid("thresholds must be ascending"));
    }
    let mut samples = sample_statistic(spec, statistic, trials, master_seed, 0, engine)?;
    samples.retain(|v| !v.is_nan());
    samples.sort_by(f64::total_cmp);
    let total = samples.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let hits = if t == f64::INFINITY {
                0
            } else {
                samples.len() - samples.partition_point(|&v| v < t)
            };
            let probability = hits as f64 / total;
            TailPoint {
                threshold: t,
                probability,
                stderr: (probability * (1.0 - probability) / total).sqrt(),
            }
        })
        .collect())
}

/// Running means of a statistic under the counterexample law. Growth across
/// checkpoints is evidence of an infinite mean; no limit is claimed.
pub fn divergence_diagnostic(
    spec: &DesignSpec,
    statistic: Statistic,
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<MomentEstimate> {
    if spec.entry_law != EntryLaw::Counterexample {
        return Err(invalid("divergence_diagnostic requires the counterexample law"));
    }
    if !matches!(
        statistic,
        Statistic::SqrtNOverSmin | Statistic::Kappa | Statistic::InvCovError
    ) {
        return Err(invalid(format!(
            "divergence_diagnostic supports sqrt_n_over_smin, kappa and inv_cov_error, not {statistic}"
        )));
    }
    estimate_moment(spec, statistic, 1.0, trials, master_seed, engine)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// 1% critical value of the KS distance for `trials` samples.
pub fn ks_critical_1pct(trials: u64) -> f64 {
    KS_COEFF_1PCT / (trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvChisqCheck {
    pub n: usize,
    pub p: usize,
    pub degrees_of_freedom: usize,
    pub trials: u64,
    pub ks_statistic: f64,
    pub critical_value_1pct: f64,
}

impl InvChisqCheck {
    pub fn passes(&self) -> bool {
        self.ks_statistic < self.critical_value_1pct
    }
}

/// `e₁ᵀ (ZᵀZ)⁻¹ e₁` for one standard Gaussian `n x p` draw.
pub fn inverse_gram_corner(z: &DenseMatrix) -> Result<f64> {
    let d = svd(z)?;
    let v0 = d.v.row(0);
    Ok(v0.iter().zip(&d.s).map(|(v, s)| v * v / (s * s)).sum())
}

/// KS test of `e₁ᵀ(ZᵀZ)⁻¹e₁` against Inverse-χ² with `n - p + 1` degrees
/// of freedom.
pub fn inv_chisq_check(
    n: usize,
    p: usize,
    trials: u64,
    master_seed: u64,
    engine: &Engine,
) -> Result<InvChisqCheck> {
    if p == 0 || n <= p + 1 {
        return Err(invalid(format!("inv_chisq_check requires n > p + 1 >= 2 (n={n}, p={p})")));
    }
    check_trials(trials, 2)?;
    let samples = engine.try_map(0..trials, |i| {
        let mut rng = StreamKey::new(master_seed, i).generator();
        inverse_gram_corner(&crate::ensembles::gaussian_iid(n, p, &mut rng))
    })?;
    let dof = n - p + 1;
    Ok(InvChisqCheck {
        n,
        p,
        degrees_of_freedom: dof,
        trials,
        ks_statistic: ks_statistic(&samples, |u| inverse_chi_squared_cdf(dof as f64, u)),
        critical_value_1pct: ks_critical_1pct(trials),
    })
}
