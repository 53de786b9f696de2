//! Closed-form moment, tail and iteration bounds with their numeric constants.
//!
//! Evaluators whose preconditions fail still return a report, flagged
//! `valid = false` with a reason and `value = +∞`.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::special::gamma;

/// Default `K` for the negative-moment bound; gives `c₂ = 21e/K = 1/2`.
pub const DEFAULT_K: f64 = 42.0 * E;
/// Default constant for the Dongarra tail bound.
pub const DEFAULT_DONGARRA_C: f64 = 6.414;
/// Admissible range for the Dongarra constant.
pub const DONGARRA_C_RANGE: (f64, f64) = (5.013, 6.414);
/// Additive constant of the expected log-condition-number bound.
pub const LOG_KAPPA_OFFSET: f64 = 2.258;
/// `C` and `c` from the positive-moment bound on `s_max`.
pub const SMAX_C: f64 = std::f64::consts::SQRT_2;
pub const SMAX_SMALL_C: f64 = 0.25;

/// An evaluated bound with its constituent constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub value: f64,
    pub constants: BTreeMap<String, f64>,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Bound on the `√n`-normalized moment, where one applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<f64>,
}

impl BoundReport {
    fn new(value: f64, constants: &[(&str, f64)]) -> Self {
        Self {
            value,
            constants: constants
                .iter()
                .map(|&(k, v)| (k.to_string(), v))
                .collect(),
            valid: true,
            reason: None,
            normalized: None,
        }
    }

    fn failed(reason: String, constants: &[(&str, f64)]) -> Self {
        Self {
            valid: false,
            reason: Some(reason),
            ..Self::new(f64::INFINITY, constants)
        }
    }

    /// A bare scalar bound with no named constants.
    pub fn scalar(value: f64) -> Self {
        Self::new(value, &[])
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }
}

struct NegMomentConstants {
    c1: f64,
    c2: f64,
    c3: f64,
}

impl NegMomentConstants {
    fn new(r: f64, k: f64) -> Self {
        Self {
            c1: r * k.powf(r / 2.0) / 2.0,
            c2: 21.0 * E / k,
            c3: 27.0 * r * (3.0 * E).powf(r / 2.0 - 1.0) / (8.0 * k * PI.sqrt()),
        }
    }

    fn table(&self, k: f64) -> [(&'static str, f64); 4] {
        [("K", k), ("c1", self.c1), ("c2", self.c2), ("c3", self.c3)]
    }
}

fn neg_moment_precondition(n: usize, p: usize, r: f64, k: f64) -> Option<String> {
    let (nf, pf) = (n as f64, p as f64);
    if !(r >= 0.0 && r.is_finite()) {
        Some(format!("moment order r must be finite and >= 0, got {r}"))
    } else if !(nf > pf + r - 1.0) {
        Some(format!("requires n > p + r - 1 (n={n}, p={p}, r={r})"))
    } else if n < p + 2 {
        Some(format!("requires n - p - 1 > 0 (n={n}, p={p})"))
    } else if !(k > 21.0 * E && k.is_finite()) {
        Some(format!("requires K > 21e ≈ {:.4}, got {k}", 21.0 * E))
    } else {
        None
    }
}

/// Upper bound on `E[s_min(X)^{-r}]` for an `n x p` standard Gaussian `X`:
/// `c₁/(n-p-1)^{r/2} + c₃ c₂^{(n-p-r+1)/2} / (n-p-1)^{(r-4)/2}`.
pub fn min_sv_negative_moment_bound(n: usize, p: usize, r: f64, k: f64) -> BoundReport {
    let c = NegMomentConstants::new(r, k);
    if let Some(reason) = neg_moment_precondition(n, p, r, k) {
        return BoundReport::failed(reason, &c.table(k));
    }
    let m = (n - p - 1) as f64;
    let expo = (n as f64 - p as f64 - r + 1.0) / 2.0;
    let leading = c.c1 / m.powf(r / 2.0);
    let remainder = c.c3 * c.c2.powf(expo) / m.powf((r - 4.0) / 2.0);
    let mut report = BoundReport::new(leading + remainder, &c.table(k));
    report.constants.insert("leading".into(), leading);
    report.constants.insert("remainder".into(), remainder);
    report.normalized = Some(normalized_value(n, p, r, &c).0);
    report
}

fn normalized_value(n: usize, p: usize, r: f64, c: &NegMomentConstants) -> (f64, f64, f64) {
    let (nf, pf) = (n as f64, p as f64);
    let base = (1.0 - pf / nf - 1.0 / nf).powf(r / 2.0);
    let m = nf - pf - 1.0;
    let leading = c.c1 / base;
    let remainder = m * m * c.c2.powf((nf - pf - r + 1.0) / 2.0) * c.c3 / base;
    (leading + remainder, leading, remainder)
}

/// Upper bound on `E[(√n / s_min(X))^r]`. At `r = 0` the leading term
/// vanishes and only the (trivially valid) remainder is left.
pub fn min_sv_normalized_moment_bound(n: usize, p: usize, r: f64, k: f64) -> BoundReport {
    let c = NegMomentConstants::new(r, k);
    if let Some(reason) = neg_moment_precondition(n, p, r, k) {
        return BoundReport::failed(reason, &c.table(k));
    }
    let (value, leading, remainder) = normalized_value(n, p, r, &c);
    let mut report = BoundReport::new(value, &c.table(k));
    report.constants.insert("leading".into(), leading);
    report.constants.insert("remainder".into(), remainder);
    report.normalized = Some(value);
    report
}

/// `E[s_max(X)^r] <= c̃₁(r)(√n + √p)^r + c̃₂(r)` with `c̃₁ = rCʳ/2`,
/// `c̃₂ = rΓ(r/2)c^{-r}`, `C = √2`, `c = 1/4`.
pub fn max_sv_moment_bound(n: usize, p: usize, r: f64) -> Result<BoundReport> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("max_sv_moment_bound requires r > 0, got {r}")));
    }
    if n == 0 || p == 0 {
        return Err(invalid("max_sv_moment_bound requires n, p >= 1"));
    }
    let ct1 = r * SMAX_C.powf(r) / 2.0;
    let ct2 = r * gamma(r / 2.0) * SMAX_SMALL_C.powf(-r);
    let value = ct1 * ((n as f64).sqrt() + (p as f64).sqrt()).powf(r) + ct2;
    let mut report = BoundReport::new(
        value,
        &[("C", SMAX_C), ("c", SMAX_SMALL_C), ("ct1", ct1), ("ct2", ct2)],
    );
    report.normalized = Some(value / (n as f64).powf(r / 2.0));
    Ok(report)
}

/// Tail bound `P(κ >= t) <= (2π)^{-1/2} (C p / (7 t (n-p+1)))^{n-p+1}`.
pub fn dongarra_kappa_tail(n: usize, p: usize, t: f64, c: f64) -> BoundReport {
    let consts = [("C", c)];
    if p == 0 || n < p {
        return BoundReport::failed(format!("requires n >= p >= 1 (n={n}, p={p})"), &consts);
    }
    if !(c >= DONGARRA_C_RANGE.0 && c <= DONGARRA_C_RANGE.1) {
        return BoundReport::failed(
            format!(
                "C must lie in [{}, {}], got {c}",
                DONGARRA_C_RANGE.0, DONGARRA_C_RANGE.1
            ),
            &consts,
        );
    }
    if !(t >= n as f64) {
        return BoundReport::failed(format!("formula stated for t >= n (t={t}, n={n})"), &consts);
    }
    let k = (n - p + 1) as f64;
    let value = (c * p as f64 / (7.0 * t * k)).powf(k) / (2.0 * PI).sqrt();
    BoundReport::new(value, &[("C", c), ("exponent", k)])
}

/// `E[log κ] <= log(n / (n-p+1)) + 2.258` for `n, p >= 2`.
pub fn expected_log_kappa_bound(n: usize, p: usize) -> Result<f64> {
    if n < 2 || p < 2 {
        return Err(invalid(format!(
            "expected_log_kappa_bound requires n, p >= 2 (n={n}, p={p})"
        )));
    }
    if p > n {
        return Err(invalid(format!("expected_log_kappa_bound requires p <= n (n={n}, p={p})")));
    }
    Ok((n as f64 / (n - p + 1) as f64).ln() + LOG_KAPPA_OFFSET)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")))
    }
}

/// `κ² log(1/ε) + 1`.
pub fn gd_iteration_upper(kappa: f64, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if !(kappa >= 1.0) {
        return Err(invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    Ok(kappa * kappa * (1.0 / epsilon).ln() + 1.0)
}

/// `⌈(L-μ)/(2μ) log(1/ε)⌉`. Arguments landing within a few ulps of an
/// integer count as that integer.
pub fn gd_worstcase_lower(l: f64, mu: f64, epsilon: f64) -> Result<u64> {
    check_epsilon(epsilon)?;
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be > 0, got {mu}")));
    }
    if !(l >= mu) || !l.is_finite() {
        return Err(invalid(format!("requires L >= mu (L={l}, mu={mu})")));
    }
    let x = (l - mu) / (2.0 * mu) * (1.0 / epsilon).ln();
    let nearest = x.round();
    let v = if (x - nearest).abs() <= 8.0 * f64::EPSILON * nearest.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok(v.max(0.0) as u64)
}

/// `(Cε)^{n-p+1} + exp(-cn)`.
pub fn rv_smallball_bound(n: usize, p: usize, epsilon: f64, c_big: f64, c_small: f64) -> Result<f64> {
    if p == 0 || n < p {
        return Err(invalid(format!("requires n >= p >= 1 (n={n}, p={p})")));
    }
    if !(epsilon >= 0.0) || !(c_big > 0.0) || !(c_small > 0.0) {
        return Err(invalid("requires epsilon >= 0 and C, c > 0"));
    }
    Ok((c_big * epsilon).powi((n - p + 1) as i32) + (-c_small * n as f64).exp())
}

/// Bias and variance upper bounds for the conditional ridge risk:
/// `λ̃² λ_max ‖B‖_F² / (λ_min + λ̃)²` and
/// `p tr(Σ_ε) / n · λ_max² / (λ_min + λ̃)²`.
pub fn ridge_risk_upper(
    lambda_tilde: f64,
    b_frob_sq: f64,
    p: usize,
    trace_sigma_eps: f64,
    n: usize,
    lambda_max_s: f64,
    lambda_min_s: f64,
) -> Result<(f64, f64)> {
    if !(lambda_tilde > 0.0) {
        return Err(invalid(format!("lambda_tilde must be > 0, got {lambda_tilde}")));
    }
    if !(b_frob_sq >= 0.0 && trace_sigma_eps >= 0.0 && lambda_max_s >= 0.0 && lambda_min_s >= 0.0)
    {
        return Err(invalid("ridge_risk_upper inputs must be non-negative"));
    }
    if n == 0 {
        return Err(invalid("ridge_risk_upper requires n >= 1"));
    }
    let denom = (lambda_min_s + lambda_tilde).powi(2);
    let bias = lambda_tilde * lambda_tilde * lambda_max_s / denom * b_frob_sq;
    let variance = p as f64 * trace_sigma_eps / n as f64 * lambda_max_s * lambda_max_s / denom;
    Ok((bias, variance))
}
