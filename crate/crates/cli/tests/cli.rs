use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CI: &str = "[problem]\na = \"1\"\nf = \"lambda*u*(1-u^2)\"\nlambda = 3.0\n";

fn sturm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sturm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &TempDir, body: &str) -> PathBuf {
    let path = dir.path().join("problem.toml");
    fs::write(&path, body).unwrap();
    path
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_lambda_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, CI);
    let out = tmp.path().join("out");
    let o = sturm(&["analyze", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["count"], 5);
    assert_eq!(r["sigma"], serde_json::json!([1, 4, 3, 2, 5]));
    assert_eq!(r["sigma_cycles"], "(2,4)");
    assert_eq!(r["graph"]["edges"], 8);
    assert_eq!(r["status"], "ok");
    assert!(out.join("attractor.dot").exists());
    for k in 1..=5 {
        assert!(out.join("equilibria").join(format!("eq_{k:02}.csv")).exists());
    }
}

#[test]
fn bifurcation_value_exits_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, CI);
    let out = tmp.path().join("out");
    let o = sturm(&["analyze", "--config", s(&cfg), "--out", s(&out), "--lambda", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "non-hyperbolic");
    assert_eq!(r["equilibria"][1]["hyperbolic"], false);
    assert!(r["graph"].is_null());
}

#[test]
fn missing_config_exits_one() {
    let o = sturm(&["analyze", "--config", "/nonexistent/problem.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn malformed_config_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, "[problem]\nf = \"u*(\"\n");
    let o = sturm(&["analyze", "--config", s(&cfg), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_suite_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, CI);
    let o = sturm(&["verify", "--config", s(&cfg), "--suite", "bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn bad_flag_exits_one() {
    assert_eq!(sturm(&["analyze", "--frobnicate"]).status.code(), Some(1));
}

#[test]
fn report_is_deterministic_apart_from_timings() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, CI);
    let runs: Vec<String> = ["a", "b"]
        .iter()
        .map(|d| {
            let out = tmp.path().join(d);
            let o = sturm(&["analyze", "--config", s(&cfg), "--out", s(&out), "--seed", "7"]);
            assert_eq!(o.status.code(), Some(0));
            let mut r = report(&out);
            r.as_object_mut().unwrap().remove("timings");
            serde_json::to_string(&r).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(
        fs::read(tmp.path().join("a/attractor.dot")).unwrap(),
        fs::read(tmp.path().join("b/attractor.dot")).unwrap()
    );
}

#[test]
fn scan_below_first_bifurcation() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, CI);
    let out = tmp.path().join("out");
    let o = sturm(&[
        "scan", "--config", s(&cfg), "--out", s(&out), "--lambda-min", "0.5", "--lambda-max", "1.5", "--steps", "5",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("scan.json")).unwrap()).unwrap();
    let counts: Vec<u64> = r["entries"].as_array().unwrap().iter().map(|e| e["count"].as_u64().unwrap()).collect();
    assert_eq!(counts, vec![3; 5]);
    assert!(r["bifurcations"].as_array().unwrap().is_empty());
}

#[test]
fn scan_rejects_reversed_interval() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, CI);
    let o = sturm(&["scan", "--config", s(&cfg), "--lambda-min", "3", "--lambda-max", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn wolfrum_suite_at_thirteen() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, CI);
    let out = tmp.path().join("out");
    let o = sturm(&["verify", "--config", s(&cfg), "--out", s(&out), "--lambda", "13", "--suite", "wolfrum"]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(r["checks"][0]["metrics"]["pairs_checked"], 32.0);
    assert_eq!(r["checks"][0]["metrics"]["mismatches"], 0.0);
}

#[test]
fn threads_flag_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, CI);
    let out = tmp.path().join("out");
    let o = sturm(&["--threads", "2", "verify", "--config", s(&cfg), "--out", s(&out), "--suite", "symmetry"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}
