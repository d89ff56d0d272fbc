use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_predissonance"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_prints_assumption_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "p.json", r#"{"preset": "predissociation_1d"}"#);
    let out = run(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["assumptions"]["pass"], Value::Bool(true));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn override_matches_edited_config() {
    let d = tempfile::tempdir().unwrap();
    let a = write(d.path(), "a.json", r#"{"preset": "predissociation_1d"}"#);
    let b = write(d.path(), "b.json", r#"{"preset": "predissociation_1d", "h": 0.3}"#);
    let oa = d.path().join("oa");
    let ob = d.path().join("ob");
    let r1 = run(&["resonances", "--config", &a, "--override", "h=0.3", "--output", oa.to_str().unwrap()]);
    let r2 = run(&["resonances", "--config", &b, "--output", ob.to_str().unwrap()]);
    assert_eq!(r1.status.code(), Some(0), "{}", String::from_utf8_lossy(&r1.stderr));
    assert_eq!(r2.status.code(), Some(0));
    let fa = fs::read(oa.join("resonances.json")).unwrap();
    assert_eq!(fa, fs::read(ob.join("resonances.json")).unwrap());
    let v: Value = serde_json::from_slice(&fa).unwrap();
    let recs = v["resonances"].as_array().unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs[0]["rho_im"].as_f64().unwrap() < 0.0);
    assert!(d.path().join("oa").read_dir().unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().contains(".tmp")));
}

#[test]
fn unknown_override_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "p.json", r#"{"preset": "predissociation_1d"}"#);
    let out = run(&["resonances", "--config", &cfg, "--override", "grid.spacing=3", "--output", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("E:"));
    assert!(!d.path().join("resonances.json").exists());
}

#[test]
fn missing_config_flag_is_usage_error() {
    let out = run(&["spectrum"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("E:"));
}

#[test]
fn coarse_grid_is_compute_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "p.json", r#"{"preset": "predissociation_1d", "grid": {"half_length": 16.0, "points": 301}}"#);
    let out = run(&["spectrum", "--config", &cfg, "--output", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("E:"));
}

#[test]
fn accept_on_failing_assumptions_writes_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "bad.json",
        r#"{"preset": "predissociation_1d", "v2": {"kind": "custom_rational", "params": [-9.1, 6.0, -1.0], "denominator": [10.0, -6.0, 1.0], "role": "v2"}}"#,
    );
    let out = run(&["accept", "--config", &cfg, "--output", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let rep: Value = serde_json::from_str(&fs::read_to_string(d.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["schema"], "predissonance-report/1");
    assert_eq!(rep["pass"], Value::Bool(false));
    let crit = rep["criteria"].as_array().unwrap();
    assert_eq!(crit.len(), 14);
    assert!(crit.iter().all(|c| c["status"] == "skipped"));
}

#[test]
fn evolve_writes_series_with_hash() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "p.json", r#"{"preset": "predissociation_1d", "h": 0.35}"#);
    let out = run(&["evolve", "--config", &cfg, "--times", "0:4:9", "--nu", "2", "--output", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(d.path().join("survival_box.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "t,re,im");
    assert_eq!(lines.count(), 9);
    let bad = run(&["evolve", "--config", &cfg, "--times", "4:1:9", "--output", d.path().to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}
