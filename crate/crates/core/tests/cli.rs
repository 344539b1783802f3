use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use byzopt::harness::read_csv;

fn byzopt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzopt"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const SMOKE: &str = r#"{
  "schema_version": 1,
  "objective": {"kind": "quartic", "dim": 10},
  "n": 5,
  "aggregator": {"rule": "gm"},
  "schedule": {"kind": "practical_decay", "gamma0": 0.1, "momentum_beta": 0.9},
  "iterations": 100
}
"#;

#[test]
fn run_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SMOKE).unwrap();
    let out = byzopt(
        &["run", "--config", "c.json", "--out", "res", "--plot"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = dir.path().join("res/none_gm_byz_nsgdm_seed0.csv");
    let rows = read_csv(&csv).unwrap();
    assert!(!rows.is_empty() && rows.len() <= 101);
    assert!(rows.iter().all(|r| r.grad_norm > 0.0));
    assert_eq!(rows.last().unwrap().k, 100);
    assert!(dir.path().join("res/none_gm_byz_nsgdm_seed0.dat").exists());
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SMOKE).unwrap();
    let out = byzopt(
        &[
            "run",
            "--config",
            "c.json",
            "--seed",
            "4",
            "--log-every",
            "25",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let rows = read_csv(&dir.path().join("none_gm_byz_nsgdm_seed4.csv")).unwrap();
    let ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    assert_eq!(ks, vec![0, 25, 50, 75, 100]);
}

#[test]
fn invalid_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMOKE.replace("\"iterations\": 100", "\"iterations\": \"many\"");
    fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = byzopt(&["run", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.json:7:"), "{stderr}");
}

#[test]
fn inconsistent_config_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMOKE.replace("\"n\": 5", "\"n\": 5, \"byzantine\": 3");
    fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = byzopt(&["run", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("B < n/2"));
}

#[test]
fn diverged_run_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = SMOKE.replace("\"gamma0\": 0.1", "\"gamma0\": 5.0").replace(
        "\"iterations\": 100",
        "\"iterations\": 100, \"optimizer\": \"baseline\", \"x0\": [10,10,10,10,10,10,10,10,10,10]",
    );
    fs::write(dir.path().join("c.json"), config).unwrap();
    let out = byzopt(&["run", "--config", "c.json"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn tune_and_quick_verify() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), SMOKE).unwrap();
    let out = byzopt(
        &["tune", "--config", "c.json", "--prefix", "50"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("gamma0 = "));
    assert!(dir.path().join("tune.json").exists());

    let out = byzopt(&["verify", "--quick", "--out", "checks"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("checks/l0l1.json").exists());
}
