//! Experiment configuration: file schema, per-subcommand parameters and the
//! merge of file values with command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gram_spectra::ensembles::{CovarianceKind, EntryLaw};
use gram_spectra::gramsolve::{InitMode, Solver, DEFAULT_MAX_ITER};
use gram_spectra::mc::Statistic;
use gram_spectra::ridge::BSpec;
use gram_spectra::rng::DEFAULT_SEED;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(flatten)]
    pub experiment: Experiment,
    pub seed: u64,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form, without the output path.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_path: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "parameters", rename_all = "kebab-case")]
pub enum Experiment {
    Moments(MomentsParams),
    Sweep(SweepParams),
    Bounds(BoundsParams),
    Ridge(RidgeParams),
    Covest(CovestParams),
    Gd(GdParams),
    Counterexample(CounterexampleParams),
    InvChisq(InvChisqParams),
}

impl Experiment {
    pub const NAMES: [&'static str; 8] = [
        "moments",
        "sweep",
        "bounds",
        "ridge",
        "covest",
        "gd",
        "counterexample",
        "inv-chisq",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Moments(_) => "moments",
            Experiment::Sweep(_) => "sweep",
            Experiment::Bounds(_) => "bounds",
            Experiment::Ridge(_) => "ridge",
            Experiment::Covest(_) => "covest",
            Experiment::Gd(_) => "gd",
            Experiment::Counterexample(_) => "counterexample",
            Experiment::InvChisq(_) => "inv-chisq",
        }
    }

    /// JSON for `bounds`, CSV for everything else.
    pub fn default_format(&self) -> Format {
        match self {
            Experiment::Bounds(_) => Format::Json,
            _ => Format::Csv,
        }
    }

    /// Builds and schema-checks the parameters of `subcommand`.
    pub fn from_parameters(subcommand: &str, parameters: Map<String, Value>) -> Result<Self, CliError> {
        if !Self::NAMES.contains(&subcommand) {
            return Err(CliError::Validation(format!(
                "unknown subcommand '{subcommand}' (expected one of {})",
                Self::NAMES.join(", ")
            )));
        }
        let tagged = serde_json::json!({ "subcommand": subcommand, "parameters": parameters });
        serde_json::from_value(tagged).map_err(|e| {
            CliError::Validation(format!("invalid parameters for '{subcommand}': {e}"))
        })
    }
}

fn one() -> f64 {
    1.0
}

fn identity() -> CovarianceKind {
    CovarianceKind::Identity
}

fn gaussian() -> EntryLaw {
    EntryLaw::Gaussian
}

fn kappa() -> Statistic {
    Statistic::Kappa
}

fn default_trials<const T: u64>() -> u64 {
    T
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsParams {
    pub n: usize,
    pub p: usize,
    #[serde(default = "kappa")]
    pub statistic: Statistic,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "default_trials::<1000>")]
    pub trials: u64,
    #[serde(default = "identity")]
    pub covariance: CovarianceKind,
    #[serde(default = "gaussian")]
    pub entry_law: EntryLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub n: usize,
    pub gamma_grid: Vec<f64>,
    #[serde(default = "kappa")]
    pub statistic: Statistic,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "default_trials::<200>")]
    pub trials: u64,
    #[serde(default = "identity")]
    pub covariance: CovarianceKind,
    #[serde(default = "gaussian")]
    pub entry_law: EntryLaw,
}

/// Closed-form evaluators reachable from `bounds --eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    MinSvNegativeMoment,
    MinSvNormalizedMoment,
    MaxSvMoment,
    DongarraTail,
    ExpectedLogKappa,
    GdIterationUpper,
    GdWorstcaseLower,
    RvSmallball,
    RidgeRiskUpper,
}

/// Only the inputs of the chosen evaluator are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsParams {
    pub eval: BoundKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// `K` of the negative-moment bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Dongarra `C`, or the small-ball `C`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Small-ball `c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_small: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_frob_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_sigma_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<f64>,
}

fn fixed_b() -> BSpec {
    BSpec::Fixed { b0: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeParams {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Unscaled penalty; `λ̃ = λ / n` is reported alongside.
    pub lambda: f64,
    #[serde(default = "identity")]
    pub covariance: CovarianceKind,
    #[serde(default = "fixed_b")]
    pub b_spec: BSpec,
    /// Noise covariance rows; the identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_eps: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_trials::<50>")]
    pub design_trials: u64,
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovestParams {
    /// `(n, p)` pairs.
    pub grid: Vec<(usize, usize)>,
    #[serde(default = "two")]
    pub r: f64,
    #[serde(default = "default_trials::<2000>")]
    pub trials: u64,
    #[serde(default = "gaussian")]
    pub entry_law: EntryLaw,
    #[serde(default = "identity")]
    pub covariance: CovarianceKind,
}

fn default_epsilon() -> f64 {
    1e-6
}

fn gd() -> Solver {
    Solver::Gd
}

fn random_init() -> InitMode {
    InitMode::Random
}

fn max_iter() -> u64 {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdParams {
    pub n: usize,
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_trials::<100>")]
    pub trials: u64,
    #[serde(default = "gd")]
    pub solver: Solver,
    #[serde(default = "random_init")]
    pub init: InitMode,
    #[serde(default = "max_iter")]
    pub max_iter: u64,
}

fn counterexample() -> EntryLaw {
    EntryLaw::Counterexample
}

fn sqrt_n_over_smin() -> Statistic {
    Statistic::SqrtNOverSmin
}

/// Running means under the counterexample law; `entry_law = gaussian`
/// gives the matching finite-moment control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleParams {
    pub n: usize,
    pub p: usize,
    #[serde(default = "sqrt_n_over_smin")]
    pub statistic: Statistic,
    #[serde(default = "default_trials::<100000>")]
    pub trials: u64,
    #[serde(default = "counterexample")]
    pub entry_law: EntryLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvChisqParams {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_trials::<2000>")]
    pub trials: u64,
}

/// Top level of a config file, before the parameters are typed.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub subcommand: String,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let file: ConfigFile = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("{origin}: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "{origin}: unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Values given on the command line; each one beats the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub output_path: Option<PathBuf>,
    pub parameters: Map<String, Value>,
}

/// Merges `file` and `overrides` into a validated config for `subcommand`.
/// A file written for another subcommand is rejected.
pub fn resolve(
    subcommand: Option<&str>,
    file: Option<ConfigFile>,
    overrides: Overrides,
) -> Result<ExperimentConfig, CliError> {
    let (name, mut parameters, seed, format, output_path) = match file {
        Some(f) => {
            if let Some(sub) = subcommand {
                if sub != f.subcommand {
                    return Err(CliError::Validation(format!(
                        "config file is for '{}', not '{sub}'",
                        f.subcommand
                    )));
                }
            }
            (f.subcommand, f.parameters, f.seed, f.format, f.output_path)
        }
        None => {
            let sub = subcommand
                .ok_or_else(|| CliError::Validation("no subcommand and no --config".into()))?;
            (sub.to_string(), Map::new(), None, None, None)
        }
    };
    parameters.extend(overrides.parameters);
    let experiment = Experiment::from_parameters(&name, parameters)?;
    let config = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        seed: overrides.seed.or(seed).unwrap_or(DEFAULT_SEED),
        format: overrides
            .format
            .or(format)
            .unwrap_or_else(|| experiment.default_format()),
        output_path: overrides.output_path.or(output_path),
        experiment,
    };
    validate(&config)?;
    Ok(config)
}

/// Reads a config file with no command-line overrides.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    resolve(None, Some(ConfigFile::read(path)?), Overrides::default())
}

/// Semantic checks that need no random draws.
pub fn validate(config: &ExperimentConfig) -> Result<(), CliError> {
    use gram_spectra::ensembles::DesignSpec;
    use gram_spectra::mc::grid_dimension;
    let design = |n, p, cov: &CovarianceKind, law| {
        DesignSpec::new(n, p, cov.clone(), law).map(|_| ()).map_err(CliError::from)
    };
    match &config.experiment {
        Experiment::Moments(m) => design(m.n, m.p, &m.covariance, m.entry_law),
        Experiment::Sweep(s) => s.gamma_grid.iter().try_for_each(|&g| {
            let p = grid_dimension(s.n, g)?;
            design(s.n, p, &s.covariance, s.entry_law)
        }),
        Experiment::Bounds(_) => Ok(()),
        Experiment::Ridge(r) => design(r.n, r.p, &r.covariance, EntryLaw::Gaussian),
        Experiment::Covest(c) => c
            .grid
            .iter()
            .try_for_each(|&(n, p)| design(n, p, &c.covariance, c.entry_law)),
        Experiment::Gd(g) => g
            .gamma_grid
            .iter()
            .try_for_each(|&x| grid_dimension(g.n, x).map(|_| ()).map_err(CliError::from)),
        Experiment::Counterexample(c) => design(c.n, c.p, &identity(), c.entry_law),
        Experiment::InvChisq(_) => Ok(()),
    }
}

/// Parses `identity`, `scaled_identity:c`, `ar1:rho` or `diagonal:v1,v2,..`.
pub fn parse_covariance(s: &str) -> Result<CovarianceKind, String> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (s.trim(), None),
    };
    let number = |a: Option<&str>| -> Result<f64, String> {
        let a = a.ok_or_else(|| format!("covariance '{kind}' needs a value, e.g. {kind}:0.5"))?;
        a.parse::<f64>().map_err(|e| format!("bad number '{a}': {e}"))
    };
    match kind.replace('-', "_").as_str() {
        "identity" => Ok(CovarianceKind::Identity),
        "scaled_identity" => Ok(CovarianceKind::ScaledIdentity { c: number(arg)? }),
        "ar1" => Ok(CovarianceKind::Ar1 { rho: number(arg)? }),
        "diagonal" => {
            let a = arg.ok_or("diagonal covariance needs values, e.g. diagonal:1,2,3")?;
            let values = a
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad number '{v}': {e}")))
                .collect::<Result<_, _>>()?;
            Ok(CovarianceKind::Diagonal { values })
        }
        other => Err(format!(
            "unknown covariance '{other}' (identity, scaled_identity:c, ar1:rho, diagonal:v1,v2,..)"
        )),
    }
}

pub fn parse_entry_law(s: &str) -> Result<EntryLaw, String> {
    match s.trim() {
        "gaussian" => Ok(EntryLaw::Gaussian),
        "counterexample" => Ok(EntryLaw::Counterexample),
        other => Err(format!("unknown law '{other}' (gaussian or counterexample)")),
    }
}

/// Parses `fixed:b0` or `random:alpha`.
pub fn parse_b_spec(s: &str) -> Result<BSpec, String> {
    let (kind, arg) = s
        .split_once(':')
        .ok_or_else(|| format!("b-spec '{s}' should look like fixed:1.0 or random:2.0"))?;
    let v: f64 = arg.trim().parse().map_err(|e| format!("bad number '{arg}': {e}"))?;
    match kind.trim() {
        "fixed" => Ok(BSpec::Fixed { b0: v }),
        "random" => Ok(BSpec::Random { alpha: v }),
        other => Err(format!("unknown b-spec '{other}' (fixed or random)")),
    }
}

/// Parses one `n:p` grid point.
pub fn parse_grid_point(s: &str) -> Result<(usize, usize), String> {
    let (n, p) = s
        .split_once(':')
        .ok_or_else(|| format!("grid point '{s}' should look like 400:40"))?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("bad integer '{x}': {e}"));
    Ok((parse(n)?, parse(p)?))
}

pub fn parse_statistic(s: &str) -> Result<Statistic, String> {
    Statistic::from_str(s).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn round_trip_through_json() {
        let config = resolve(
            Some("sweep"),
            None,
            Overrides {
                parameters: params(serde_json::json!({"n": 200, "gamma_grid": [0.5, 1.0]})),
                ..Default::default()
            },
        )
        .unwrap();
        let text = config.to_json();
        let again = resolve(None, Some(ConfigFile::parse(&text, "mem").unwrap()), Overrides::default())
            .unwrap();
        assert_eq!(again, config);
        assert_eq!(again.hash(), config.hash());
    }

    #[test]
    fn missing_field_is_named() {
        let text = r#"{"schema_version": 1, "subcommand": "moments", "parameters": {"p": 5}}"#;
        let err = resolve(None, Some(ConfigFile::parse(text, "mem").unwrap()), Overrides::default())
            .unwrap_err();
        assert!(err.to_string().contains("missing field `n`"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let top = r#"{"schema_version": 1, "subcommand": "moments", "colour": 1}"#;
        assert!(ConfigFile::parse(top, "mem").unwrap_err().to_string().contains("colour"));
        let inner = r#"{"schema_version": 1, "subcommand": "moments",
                        "parameters": {"n": 5, "p": 2, "trails": 10}}"#;
        let err = resolve(None, Some(ConfigFile::parse(inner, "mem").unwrap()), Overrides::default())
            .unwrap_err();
        assert!(err.to_string().contains("trails"), "{err}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = ConfigFile::parse("{\n  \"schema_version\": 1,\n  oops\n}", "cfg.json").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn flags_beat_file() {
        let text = r#"{"schema_version": 1, "subcommand": "inv-chisq", "seed": 1,
                       "parameters": {"n": 30, "p": 10, "trials": 50}}"#;
        let config = resolve(
            Some("inv-chisq"),
            Some(ConfigFile::parse(text, "mem").unwrap()),
            Overrides {
                seed: Some(2),
                parameters: params(serde_json::json!({"trials": 70})),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(config.seed, 2);
        assert_eq!(
            config.experiment,
            Experiment::InvChisq(InvChisqParams { n: 30, p: 10, trials: 70 })
        );
    }

    #[test]
    fn wrong_schema_or_subcommand() {
        let text = r#"{"schema_version": 9, "subcommand": "gd"}"#;
        assert!(ConfigFile::parse(text, "mem").is_err());
        let text = r#"{"schema_version": 1, "subcommand": "gd", "parameters": {"n": 10, "gamma_grid": [0.5]}}"#;
        let file = ConfigFile::parse(text, "mem").unwrap();
        assert!(resolve(Some("sweep"), Some(file), Overrides::default()).is_err());
    }

    #[test]
    fn counterexample_with_ar1_is_invalid() {
        let err = resolve(
            Some("moments"),
            None,
            Overrides {
                parameters: params(serde_json::json!({
                    "n": 10, "p": 3, "entry_law": "counterexample",
                    "covariance": {"kind": "ar1", "params": {"rho": 0.5}}
                })),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
        assert!(err.to_string().contains("identity covariance"), "{err}");
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_covariance("ar1:0.5").unwrap(), CovarianceKind::Ar1 { rho: 0.5 });
        assert_eq!(
            parse_covariance("diagonal:1,2").unwrap(),
            CovarianceKind::Diagonal { values: vec![1.0, 2.0] }
        );
        assert!(parse_covariance("ar1").is_err());
        assert_eq!(parse_b_spec("random:2").unwrap(), BSpec::Random { alpha: 2.0 });
        assert_eq!(parse_grid_point("400:40").unwrap(), (400, 40));
        assert!(parse_grid_point("400").is_err());
        assert_eq!(parse_statistic("sqrt-n-over-smin").unwrap(), Statistic::SqrtNOverSmin);
    }
}
