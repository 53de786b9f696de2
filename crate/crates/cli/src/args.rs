//! Command-line grammar. Every subcommand flag mirrors a parameter key of
//! the config file and overrides it when given.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gram_spectra::ensembles::{CovarianceKind, EntryLaw};
use gram_spectra::gramsolve::{InitMode, Solver};
use gram_spectra::mc::Statistic;
use gram_spectra::ridge::BSpec;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{
    parse_b_spec, parse_covariance, parse_entry_law, parse_grid_point, parse_statistic, resolve,
    BoundKind, ConfigFile, ExperimentConfig, Format, Overrides,
};
use crate::run::RunOptions;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "gram-spectra",
    version,
    about = "Moment bounds and Monte Carlo experiments for condition numbers of random matrices"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Master seed [default: 20240601].
    #[arg(long, global = true, env = "GRAM_SPECTRA_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file, written atomically. Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Accept gd runs that hit the iteration cap.
    #[arg(long, global = true)]
    pub allow_censored: bool,
    /// Print the resolved config as JSON and exit without running.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moment of one statistic over random designs.
    Moments(MomentsFlags),
    /// Moments across aspect ratios γ = p/n.
    Sweep(SweepFlags),
    /// Evaluate a closed-form bound.
    Bounds(BoundsFlags),
    /// Mean ridge prediction risk over random designs.
    Ridge(RidgeFlags),
    /// Forward and inverse sample-covariance error rates.
    Covest(CovestFlags),
    /// Gradient-descent iteration counts on Gram systems.
    Gd(GdFlags),
    /// Running means under the bounded counterexample law.
    Counterexample(CounterexampleFlags),
    /// KS test of the Inverse-χ² corner of (ZᵀZ)⁻¹.
    InvChisq(InvChisqFlags),
    /// Run whatever experiment the --config file describes.
    Run,
}

#[derive(Debug, Args, Serialize)]
pub struct MomentsFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// kappa, sqrt_n_over_smin, smax_over_sqrt_n, log_kappa, inv_cov_error, cov_error
    #[arg(long, value_parser = parse_statistic)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<Statistic>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// identity, scaled_identity:c, ar1:rho or diagonal:v1,v2,..
    #[arg(long = "cov", value_parser = parse_covariance)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceKind>,
    /// gaussian or counterexample
    #[arg(long = "law", value_parser = parse_entry_law)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry_law: Option<EntryLaw>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Comma-separated aspect ratios, e.g. 0.5,1.0,2.0
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_statistic)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<Statistic>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[arg(long = "cov", value_parser = parse_covariance)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceKind>,
    #[arg(long = "law", value_parser = parse_entry_law)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry_law: Option<EntryLaw>,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsFlags {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<BoundKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// K of the negative-moment bound [default: 42e]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Dongarra C [default: 6.414], or the small-ball C
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Small-ball exponential rate c
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_small: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_tilde: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_frob_sq: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_sigma_eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct RidgeFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    /// Unscaled penalty λ; λ̃ = λ/n is reported too.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long = "cov", value_parser = parse_covariance)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceKind>,
    /// fixed:b0 (every entry b0) or random:alpha (E‖B‖_F² = alpha²)
    #[arg(long, value_parser = parse_b_spec)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_spec: Option<BSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design_trials: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct CovestFlags {
    /// Comma-separated n:p pairs, e.g. 100:10,400:40
    #[arg(long, value_delimiter = ',', num_args = 1.., value_parser = parse_grid_point)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<(usize, usize)>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[arg(long = "law", value_parser = parse_entry_law)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry_law: Option<EntryLaw>,
    #[arg(long = "cov", value_parser = parse_covariance)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceKind>,
}

#[derive(Debug, Args, Serialize)]
pub struct GdFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// gd or cg
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    /// random or worstcase
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct CounterexampleFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// sqrt_n_over_smin, kappa or inv_cov_error
    #[arg(long, value_parser = parse_statistic)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<Statistic>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// counterexample, or gaussian for the control run
    #[arg(long = "law", value_parser = parse_entry_law)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry_law: Option<EntryLaw>,
}

#[derive(Debug, Args, Serialize)]
pub struct InvChisqFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
}

fn flag_map<T: Serialize>(flags: &T) -> Map<String, Value> {
    match serde_json::to_value(flags).expect("flags serialize") {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

impl Command {
    fn parts(&self) -> Option<(&'static str, Map<String, Value>)> {
        Some(match self {
            Command::Moments(f) => ("moments", flag_map(f)),
            Command::Sweep(f) => ("sweep", flag_map(f)),
            Command::Bounds(f) => ("bounds", flag_map(f)),
            Command::Ridge(f) => ("ridge", flag_map(f)),
            Command::Covest(f) => ("covest", flag_map(f)),
            Command::Gd(f) => ("gd", flag_map(f)),
            Command::Counterexample(f) => ("counterexample", flag_map(f)),
            Command::InvChisq(f) => ("inv-chisq", flag_map(f)),
            Command::Run => return None,
        })
    }
}

impl Cli {
    /// Resolves the effective config: flags, then `GRAM_SPECTRA_SEED`, then
    /// the config file, then defaults.
    pub fn resolve(&self) -> Result<(ExperimentConfig, RunOptions), CliError> {
        let file = self.global.config.as_deref().map(ConfigFile::read).transpose()?;
        let (subcommand, parameters) = match self.command.parts() {
            Some((name, params)) => (Some(name), params),
            None if file.is_some() => (None, Map::new()),
            None => return Err(CliError::Validation("`run` needs --config <file>".into())),
        };
        let overrides = Overrides {
            seed: self.global.seed,
            format: self.global.format,
            output_path: self.global.out.clone(),
            parameters,
        };
        let config = resolve(subcommand, file, overrides)?;
        let options = RunOptions {
            workers: self.global.workers,
            allow_censored: self.global.allow_censored,
        };
        Ok((config, options))
    }
}
