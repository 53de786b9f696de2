//! Executes a validated config and renders its results.

use gram_spectra::bounds::{
    dongarra_kappa_tail, expected_log_kappa_bound, gd_iteration_upper, gd_worstcase_lower,
    max_sv_moment_bound, min_sv_negative_moment_bound, min_sv_normalized_moment_bound,
    ridge_risk_upper, rv_smallball_bound, BoundReport, DEFAULT_DONGARRA_C, DEFAULT_K,
    LOG_KAPPA_OFFSET,
};
use gram_spectra::covest::{rate_experiment, RateRow};
use gram_spectra::ensembles::{CovarianceKind, DesignSpec, EntryLaw};
use gram_spectra::gramsolve::{complexity_experiment, ComplexityRow, ComplexitySetup};
use gram_spectra::linalg::DenseMatrix;
use gram_spectra::mc::{
    divergence_diagnostic, estimate_moment, inv_chisq_check, sweep_gamma_design, Engine,
    MomentEstimate, SweepRow, OVERFLOW_THRESHOLD,
};
use gram_spectra::ridge::{mean_risk_experiment, MeanRisk, MeanRiskSetup};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BoundKind, BoundsParams, Experiment, ExperimentConfig, Format};
use crate::output::{write_atomic, Table};
use crate::CliError;

/// Largest censored fraction accepted without `--allow-censored`.
pub const CENSORED_THRESHOLD: f64 = 0.01;

/// Execution settings that do not change results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// 0 uses every available core.
    pub workers: usize,
    pub allow_censored: bool,
}

/// Rendered output of one experiment.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub bytes: Vec<u8>,
    pub summary: String,
    /// Set when results exist but failed a numerical-health check.
    pub numerical_failure: Option<String>,
}

/// Result tables plus the JSON mirror.
struct Results {
    table: Table,
    json: Value,
    summary: String,
    failure: Option<String>,
}

pub fn render(config: &ExperimentConfig, options: &RunOptions) -> Result<Rendered, CliError> {
    let engine = Engine::new(options.workers)?;
    let seed = config.seed;
    let res = match &config.experiment {
        Experiment::Moments(m) => {
            let spec = DesignSpec::new(m.n, m.p, m.covariance.clone(), m.entry_law)?;
            let est = estimate_moment(&spec, m.statistic, m.r, m.trials, seed, &engine)?;
            let row = SweepRow {
                n: m.n,
                p: m.p,
                gamma: m.p as f64 / m.n as f64,
                estimate: est,
            };
            let summary = format!(
                "moments: E[{}^{}] = {} ± {} over {} trials",
                m.statistic, m.r, row.estimate.mean, row.estimate.stderr, m.trials
            );
            let failure = overflow_failure(std::slice::from_ref(&row.estimate));
            Results {
                table: sweep_table(std::slice::from_ref(&row)),
                json: to_json(&row),
                summary,
                failure,
            }
        }
        Experiment::Sweep(s) => {
            let rows = sweep_gamma_design(
                s.n,
                &s.gamma_grid,
                &s.covariance,
                s.entry_law,
                s.statistic,
                s.r,
                s.trials,
                seed,
                &engine,
            )?;
            let estimates: Vec<_> = rows.iter().map(|r| r.estimate.clone()).collect();
            let summary = format!(
                "sweep: {} rows at n={}, means [{}]",
                rows.len(),
                s.n,
                rows.iter()
                    .map(|r| format!("γ={}: {:.4}", r.gamma, r.estimate.mean))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            Results {
                table: sweep_table(&rows),
                json: to_json(&rows),
                summary,
                failure: overflow_failure(&estimates),
            }
        }
        Experiment::Bounds(b) => {
            let report = evaluate_bound(b)?;
            let summary = format!(
                "bounds: {} = {} (valid: {})",
                serde_json::to_value(b.eval).unwrap().as_str().unwrap_or("bound"),
                report.value,
                report.valid
            );
            let mut table = Table::new("name,value");
            table.push(format!("value,{}", report.value));
            table.push(format!("valid,{}", report.valid));
            if let Some(v) = report.normalized {
                table.push(format!("normalized,{v}"));
            }
            for (k, v) in &report.constants {
                table.push(format!("{k},{v}"));
            }
            Results {
                table,
                json: to_json(&report),
                summary,
                failure: None,
            }
        }
        Experiment::Ridge(r) => {
            let setup = MeanRiskSetup {
                n: r.n,
                p: r.p,
                q: r.q,
                lambda: r.lambda,
                covariance: r.covariance.clone(),
                sigma_eps: match &r.sigma_eps {
                    Some(rows) => Some(dense(rows)?),
                    None => None,
                },
                b_spec: r.b_spec,
            };
            let risk = mean_risk_experiment(&setup, r.design_trials, seed, &engine)?;
            let summary = format!(
                "ridge: mean risk {} ± {} (bias {}, variance {}) over {} designs",
                risk.total, risk.stderr, risk.bias, risk.variance, r.design_trials
            );
            let mut table = Table::new(MeanRisk::CSV_HEADER);
            table.push(risk.csv_record());
            Results {
                table,
                json: to_json(&risk),
                summary,
                failure: None,
            }
        }
        Experiment::Covest(c) => {
            let spec_for =
                |n, p| DesignSpec::new(n, p, c.covariance.clone(), c.entry_law);
            let rows = rate_experiment(spec_for, &c.grid, c.r, c.trials, seed, &engine)?;
            let mut table = Table::new(RateRow::CSV_HEADER);
            rows.iter().for_each(|row| table.push(row.csv_record()));
            let overflow: u64 = rows.iter().map(|r| r.overflow_count).sum();
            let worst = rows
                .iter()
                .map(|r| r.overflow_count as f64 / r.trials as f64)
                .fold(0.0, f64::max);
            let failure = (worst > OVERFLOW_THRESHOLD).then(|| {
                format!("overflow fraction {worst} exceeds {OVERFLOW_THRESHOLD}")
            });
            let summary = format!(
                "covest: {} grid points, inverse ratios [{}], {overflow} overflowed trials",
                rows.len(),
                rows.iter()
                    .map(|r| format!("{:.4}", r.inverse_ratio))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            Results {
                table,
                json: to_json(&rows),
                summary,
                failure,
            }
        }
        Experiment::Gd(g) => {
            let setup = ComplexitySetup {
                epsilon: g.epsilon,
                trials: g.trials,
                solver: g.solver,
                init: g.init,
                max_iter: g.max_iter,
            };
            let rows = complexity_experiment(g.n, &g.gamma_grid, &setup, seed, &engine)?;
            let mut table = Table::new(ComplexityRow::CSV_HEADER);
            rows.iter().for_each(|row| table.push(row.csv_record()));
            let worst = rows.iter().map(|r| r.censored_fraction).fold(0.0, f64::max);
            let failure = (worst > CENSORED_THRESHOLD && !options.allow_censored).then(|| {
                format!(
                    "censored fraction {worst} exceeds {CENSORED_THRESHOLD}; \
                     pass --allow-censored to accept lower-bound means"
                )
            });
            let summary = format!(
                "gd: mean T [{}], censored [{}]",
                rows.iter().map(|r| format!("γ={}: {}", r.gamma, r.mean_t)).collect::<Vec<_>>().join(", "),
                rows.iter().map(|r| r.censored_fraction.to_string()).collect::<Vec<_>>().join(", ")
            );
            Results {
                table,
                json: to_json(&rows),
                summary,
                failure,
            }
        }
        Experiment::Counterexample(c) => {
            let spec = DesignSpec::new(c.n, c.p, CovarianceKind::Identity, c.entry_law)?;
            let est = match c.entry_law {
                EntryLaw::Counterexample => {
                    divergence_diagnostic(&spec, c.statistic, c.trials, seed, &engine)?
                }
                EntryLaw::Gaussian => estimate_moment(&spec, c.statistic, 1.0, c.trials, seed, &engine)?,
            };
            let mut table = Table::new("statistic,checkpoint,running_mean,stderr");
            for cp in &est.running_means {
                table.push(format!("{},{},{},{}", est.statistic, cp.trials, cp.mean, cp.stderr));
            }
            let summary = format!(
                "counterexample: running means [{}], max sample {}, {} overflowed",
                est.running_means
                    .iter()
                    .map(|cp| format!("{}: {:.4}", cp.trials, cp.mean))
                    .collect::<Vec<_>>()
                    .join(", "),
                est.max_sample,
                est.overflow_count
            );
            Results {
                table,
                failure: overflow_failure(std::slice::from_ref(&est)),
                json: to_json(&est),
                summary,
            }
        }
        Experiment::InvChisq(i) => {
            let check = inv_chisq_check(i.n, i.p, i.trials, seed, &engine)?;
            let mut table =
                Table::new("n,p,degrees_of_freedom,trials,ks_statistic,critical_value_1pct,passes");
            table.push(format!(
                "{},{},{},{},{},{},{}",
                check.n,
                check.p,
                check.degrees_of_freedom,
                check.trials,
                check.ks_statistic,
                check.critical_value_1pct,
                check.passes()
            ));
            let summary = format!(
                "inv-chisq: KS distance {} vs 1% critical value {} ({})",
                check.ks_statistic,
                check.critical_value_1pct,
                if check.passes() { "accepted" } else { "rejected" }
            );
            let mut json = to_json(&check);
            json["passes"] = Value::Bool(check.passes());
            Results {
                table,
                json,
                summary,
                failure: None,
            }
        }
    };
    let bytes = match config.format {
        Format::Csv => res.table.to_csv(&header_comment(config)),
        Format::Json => {
            let body = match &config.experiment {
                Experiment::Bounds(_) => res.json,
                _ => json!({
                    "tool": "gram-spectra",
                    "version": env!("CARGO_PKG_VERSION"),
                    "config_hash": config.hash(),
                    "seed": config.seed,
                    "results": res.json,
                }),
            };
            let mut s = serde_json::to_string_pretty(&body).expect("results serialize");
            s.push('\n');
            s.into_bytes()
        }
    };
    Ok(Rendered {
        bytes,
        summary: res.summary,
        numerical_failure: res.failure,
    })
}

/// Renders `config`, writes it to `output_path` atomically (or stdout when
/// unset) and returns the rendered result.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<Rendered, CliError> {
    let rendered = render(config, options)?;
    match &config.output_path {
        Some(path) => write_atomic(path, &rendered.bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&rendered.bytes)?;
        }
    }
    Ok(rendered)
}

pub fn header_comment(config: &ExperimentConfig) -> String {
    format!(
        "# gram-spectra {} {} config_sha256={} seed={}",
        env!("CARGO_PKG_VERSION"),
        config.experiment.name(),
        config.hash(),
        config.seed
    )
}

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("results serialize")
}

fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut table = Table::new(SweepRow::CSV_HEADER);
    rows.iter().for_each(|r| table.push(r.csv_record()));
    table
}

fn overflow_failure(estimates: &[MomentEstimate]) -> Option<String> {
    estimates.iter().find(|e| e.unreliable).map(|e| {
        format!(
            "{} of {} trials of {} overflowed (threshold {OVERFLOW_THRESHOLD})",
            e.overflow_count, e.trials, e.statistic
        )
    })
}

fn dense(rows: &[Vec<f64>]) -> Result<DenseMatrix, CliError> {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Ok(DenseMatrix::from_rows(&refs)?)
}

fn need<T: Copy>(value: Option<T>, name: &str, eval: BoundKind) -> Result<T, CliError> {
    value.ok_or_else(|| {
        let eval = serde_json::to_value(eval).unwrap();
        CliError::Validation(format!(
            "missing parameter `{name}` for bounds --eval {}",
            eval.as_str().unwrap_or_default()
        ))
    })
}

fn evaluate_bound(b: &BoundsParams) -> Result<BoundReport, CliError> {
    let e = b.eval;
    let n = || need(b.n, "n", e);
    let p = || need(b.p, "p", e);
    let r = || need(b.r, "r", e);
    let epsilon = || need(b.epsilon, "epsilon", e);
    let with = |value: f64, constants: &[(&str, f64)]| {
        let mut report = BoundReport::scalar(value);
        for &(k, v) in constants {
            report.constants.insert(k.to_string(), v);
        }
        report
    };
    Ok(match e {
        BoundKind::MinSvNegativeMoment => {
            min_sv_negative_moment_bound(n()?, p()?, r()?, b.k.unwrap_or(DEFAULT_K))
        }
        BoundKind::MinSvNormalizedMoment => {
            min_sv_normalized_moment_bound(n()?, p()?, r()?, b.k.unwrap_or(DEFAULT_K))
        }
        BoundKind::MaxSvMoment => max_sv_moment_bound(n()?, p()?, r()?)?,
        BoundKind::DongarraTail => dongarra_kappa_tail(
            n()?,
            p()?,
            need(b.t, "t", e)?,
            b.c.unwrap_or(DEFAULT_DONGARRA_C),
        ),
        BoundKind::ExpectedLogKappa => {
            with(expected_log_kappa_bound(n()?, p()?)?, &[("offset", LOG_KAPPA_OFFSET)])
        }
        BoundKind::GdIterationUpper => {
            with(gd_iteration_upper(need(b.kappa, "kappa", e)?, epsilon()?)?, &[])
        }
        BoundKind::GdWorstcaseLower => with(
            gd_worstcase_lower(need(b.l, "l", e)?, need(b.mu, "mu", e)?, epsilon()?)? as f64,
            &[],
        ),
        BoundKind::RvSmallball => {
            let (c_big, c_small) = (need(b.c, "c", e)?, need(b.c_small, "c_small", e)?);
            with(
                rv_smallball_bound(n()?, p()?, epsilon()?, c_big, c_small)?,
                &[("C", c_big), ("c", c_small)],
            )
        }
        BoundKind::RidgeRiskUpper => {
            let (bias, variance) = ridge_risk_upper(
                need(b.lambda_tilde, "lambda_tilde", e)?,
                need(b.b_frob_sq, "b_frob_sq", e)?,
                p()?,
                need(b.trace_sigma_eps, "trace_sigma_eps", e)?,
                n()?,
                need(b.lambda_max, "lambda_max", e)?,
                need(b.lambda_min, "lambda_min", e)?,
            )?;
            with(bias + variance, &[("bias_upper", bias), ("variance_upper", variance)])
        }
    })
}
