//! End-to-end runs of the `badr` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_badr"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

/// The bundled toy with a shorter BADR run.
fn quick_toy(dir: &Path) -> PathBuf {
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(bundled("biased_toy.json")).unwrap()).unwrap();
    cfg["solver"]["iters"] = 300.into();
    write_config(dir, cfg)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fit_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["fit", "--config", bundled("biased_toy.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report.json", "trajectory.csv", "weights.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join("timings.csv").exists());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "fit");
    let lambda = report["eval"]["strategies"][0]["lambda"].as_array().unwrap();
    let total: f64 = lambda.iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let weights = fs::read_to_string(out.join("weights.csv")).unwrap();
    assert!(weights.starts_with("kind,index,value"));
}

#[test]
fn same_seed_gives_identical_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = quick_toy(tmp.path());
    let mut reports = Vec::new();
    for tag in ["a", "b"] {
        let out = tmp.path().join(tag);
        let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn stochastic_fit_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(bundled("biased_toy_sgd.json")).unwrap()).unwrap();
    cfg["solver"]["iters"] = 400.into();
    let cfg = write_config(tmp.path(), cfg);
    let mut traj = Vec::new();
    for tag in ["a", "b"] {
        let out = tmp.path().join(tag);
        let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        traj.push(fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_eq!(traj[0], traj[1]);
}

#[test]
fn invalid_metric_names_the_options() {
    let tmp = TempDir::new().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(bundled("biased_toy.json")).unwrap()).unwrap();
    cfg["metric"]["name"] = "parity".into();
    let cfg = write_config(tmp.path(), cfg);
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    for name in ["gv", "if", "dp", "dm", "eop", "eod", "hsic"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn unknown_field_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), serde_json::json!({"solver": {"name": "badr-gd", "iterations": 5}}));
    let o = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("solver"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_exits_2() {
    let o = run(&["fit", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_run_exits_1_with_partial_trajectory() {
    let tmp = TempDir::new().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(bundled("biased_toy.json")).unwrap()).unwrap();
    cfg["solver"]["tau"] = 1e9.into();
    cfg["solver"]["rho_dual"] = 1.0.into();
    cfg["solver"]["gamma"] = 0.01.into();
    let cfg = write_config(tmp.path(), cfg);
    let out = tmp.path().join("out");
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(out.join("trajectory.csv").is_file());
}

#[test]
fn compare_reports_five_strategies() {
    let tmp = TempDir::new().unwrap();
    let cfg = quick_toy(tmp.path());
    let out = tmp.path().join("out");
    let o = run(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["eval"]["strategies"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 5);
    for n in ["badr-gd", "uniform", "balanced", "one-group", "minimax"] {
        assert!(names.contains(&n), "{names:?}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("minimax"));
    assert!(fs::read_to_string(out.join("weights.csv")).unwrap().starts_with("strategy,kind,index,value"));
}

#[test]
fn scan_is_complete_and_byte_stable() {
    let tmp = TempDir::new().unwrap();
    let cfg = bundled("biased_toy.json");
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let out = tmp.path().join(tag);
        let o = run(&["scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(fs::read_to_string(out.join("scan.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let lines: Vec<&str> = outputs[0].lines().collect();
    assert_eq!(lines.len(), 102);
    assert_eq!(lines[0], "lambda_0,lambda_1,F_0,F_1,fairness");
}

#[test]
fn check_passes_and_catches_a_corrupted_metric() {
    let o = run(&["check", "--config", bundled("check.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), serde_json::json!({"check": {"instances": 5, "corrupt_metric": "eop"}}));
    let o = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("metric/eop"), "{}", stderr(&o));
}

#[test]
fn csv_config_runs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["fit", "--config", bundled("csv_toy.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    // two binary sensitive columns give four groups
    assert_eq!(report["eval"]["strategies"][0]["lambda"].as_array().unwrap().len(), 4);
}

#[test]
fn timings_are_opt_in() {
    let tmp = TempDir::new().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(bundled("biased_toy.json")).unwrap()).unwrap();
    cfg["solver"] = serde_json::json!({"name": "projected-gradient"});
    cfg["output"] = serde_json::json!({"timings": true});
    let cfg = write_config(tmp.path(), cfg);
    let out = tmp.path().join("out");
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("timings.csv").is_file());
}
