use std::path::Path;
use std::process::{Command, Output};

fn gram_spectra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gram-spectra"))
        .args(args)
        .env_remove("GRAM_SPECTRA_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn sweep_example() {
    let o = gram_spectra(&[
        "sweep", "--n", "200", "--gamma-grid", "0.5,1.0,2.0", "--statistic", "kappa", "--r", "1",
        "--trials", "200", "--seed", "7",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    let comment = lines.next().unwrap();
    assert!(comment.starts_with("# gram-spectra "));
    assert!(comment.contains("config_sha256=") && comment.ends_with("seed=7"));
    assert_eq!(lines.next().unwrap(), "n,p,gamma,statistic,r,trials,mean,stderr,max_sample,overflow_count");
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 3);
    let means: Vec<f64> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(means[1] > means[0] && means[1] > means[2], "{means:?}");
    assert!(stderr(&o).contains("sweep: 3 rows"));
}

#[test]
fn bounds_prints_json_report() {
    let o = gram_spectra(&["bounds", "--eval", "expected-log-kappa", "--n", "100", "--p", "50"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["value"].as_f64().unwrap() - 2.931).abs() < 5e-4);
    assert_eq!(v["valid"], true);
    assert!(v["constants"].is_object());

    let o = gram_spectra(&["bounds", "--eval", "max-sv-moment", "--n", "100", "--p", "25", "--r", "2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["value"].as_f64().unwrap() - 482.0).abs() < 1e-9);

    let o = gram_spectra(&[
        "bounds", "--eval", "dongarra-tail", "--n", "10", "--p", "5", "--t", "5",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["valid"], false);
    assert!(v["value"].is_null());
}

#[test]
fn bounds_missing_input_is_validation_error() {
    let o = gram_spectra(&["bounds", "--eval", "dongarra-tail", "--n", "10", "--p", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`t`"), "{}", stderr(&o));
}

#[test]
fn invalid_combination_exits_1() {
    let o = gram_spectra(&["moments", "--n", "10", "--p", "3", "--law", "counterexample", "--cov", "ar1:0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("identity covariance"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_field_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "subcommand": "moments", "parameters": {"p": 4}}"#).unwrap();
    let o = gram_spectra(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing field `n`"), "{}", stderr(&o));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "subcommand": "inv-chisq", "seed": 1,
            "parameters": {"n": 12, "p": 3, "trials": 20}}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let seed_of = |o: &Output| -> u64 {
        let text = String::from_utf8(o.stdout.clone()).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap()["seed"].as_u64().unwrap()
    };
    let o = gram_spectra(&["run", "--config", cfg, "--print-config"]);
    assert_eq!(seed_of(&o), 1);
    let o = gram_spectra(&["run", "--config", cfg, "--print-config", "--seed", "2"]);
    assert_eq!(seed_of(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_gram-spectra"))
        .args(["run", "--config", cfg, "--print-config"])
        .env("GRAM_SPECTRA_SEED", "3")
        .output()
        .unwrap();
    assert_eq!(seed_of(&o), 3);
    let o = gram_spectra(&["inv-chisq", "--n", "12", "--p", "3", "--print-config"]);
    assert_eq!(seed_of(&o), 20240601);
}

#[test]
fn printed_config_reloads_to_same_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["covest", "--grid", "40:4,60:6", "--r", "2", "--trials", "30", "--seed", "9"];
    let printed = gram_spectra(&[&args[..], &["--print-config"]].concat());
    assert!(printed.status.success());
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, &printed.stdout).unwrap();
    let reprinted = gram_spectra(&["run", "--config", cfg.to_str().unwrap(), "--print-config"]);
    assert_eq!(printed.stdout, reprinted.stdout);

    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = gram_spectra(&[&args[..], &["--out", a.to_str().unwrap(), "--workers", "1"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = gram_spectra(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--workers", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("n,p,r,trials,forward_norm_moment"));
    assert_eq!(data_rows(&text).len(), 2);
}

#[test]
fn json_mirror_has_running_means() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = gram_spectra(&[
        "moments", "--n", "20", "--p", "5", "--statistic", "log_kappa", "--trials", "150",
        "--format", "json", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let r = &v["results"];
    assert_eq!(r["estimate"]["statistic"], "log_kappa");
    assert_eq!(r["estimate"]["running_means"].as_array().unwrap().len(), 3);
    assert_eq!(v["seed"], 20240601);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn censoring_is_a_numerical_failure_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gd.csv");
    let args = [
        "gd", "--n", "30", "--gamma-grid", "1.0", "--epsilon", "1e-6", "--trials", "5",
        "--init", "worstcase", "--max-iter", "3", "--out", out.to_str().unwrap(),
    ];
    let o = gram_spectra(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(Path::new(&out).exists());
    let o = gram_spectra(&[&args[..], &["--allow-censored"]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows[0][11], "1");
}

#[test]
fn remaining_subcommands_run() {
    let o = gram_spectra(&[
        "ridge", "--n", "50", "--p", "5", "--q", "2", "--lambda", "5", "--b-spec", "random:2",
        "--design-trials", "10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows[0].len(), 10);
    assert_eq!(rows[0][4], "0.1");

    let o = gram_spectra(&["counterexample", "--n", "3", "--p", "3", "--trials", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&stdout(&o));
    let checkpoints: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(checkpoints, ["10", "100", "1000"]);

    let o = gram_spectra(&["inv-chisq", "--n", "30", "--p", "10", "--trials", "300"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&stdout(&o))[0][2], "21");
}

#[test]
fn unknown_flag_rejected_by_parser() {
    let o = gram_spectra(&["sweep", "--n", "10", "--gama-grid", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(gram_spectra(&["--help"]).status.success());
}
