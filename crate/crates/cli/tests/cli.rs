use std::path::PathBuf;
use std::process::{Command, Output};

fn starfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starfl")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(name: &str) -> String {
    configs().join(name).display().to_string()
}

#[test]
fn validate_passes_on_shipped_config() {
    let out = starfl(&["--config", &shipped("desk.toml"), "validate"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.lines().any(|l| l.starts_with("PASS sdp grid oracle")));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let out = starfl(&["--config", "/no/such/dir/cfg.toml", "trial"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/dir/cfg.toml"));
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(starfl(&["--bogus", "trial"]).status.code(), Some(2));
    assert_eq!(starfl(&["trial", "--scenario", "XX-YY"]).status.code(), Some(2));
    assert_eq!(starfl(&[]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "profile = \"desk\"\nwidgets = 3\n").unwrap();
    let out = starfl(&["--config", path.to_str().unwrap(), "trial"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_the_summary_header_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, "param = \"T\"\nvalues = [9.0, 10.0]\nscenarios = [\"TS-TS\"]\ntrials = 2\n").unwrap();
    let csv = dir.path().join("results.csv");
    let jsonl = dir.path().join("trials.jsonl");
    let out = starfl(&[
        "sweep",
        spec.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--records",
        jsonl.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("param,value,scenario,mean_energy_J,stderr_J,infeasible_rate,trials"));
    assert_eq!(lines.count(), 2);
    let records = std::fs::read_to_string(&jsonl).unwrap();
    assert_eq!(records.lines().count(), 4);
    for line in records.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["param"], "T");
        assert!(v.get("plan").is_some() && v.get("energy").is_some());
    }
}

#[test]
fn trial_dumps_json_per_scenario() {
    let out = starfl(&["trial", "--seed", "3", "--scenario", "es_es"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 1);
    assert_eq!(arr[0]["scenario"], "ES-ES");
    assert_eq!(arr[0]["seed"], 3);
    assert!(arr[0]["energy"]["total_j"].as_f64().unwrap() > 0.0);
}

#[test]
fn verbose_trial_reports_solver_iterations() {
    let out = starfl(&["trial", "--scenario", "TS-TS", "--verbose"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bcd e ES iter 1"));
}

#[test]
fn convergence_trace_is_csv() {
    let out = starfl(&["convergence", "--scenario", "ES-ES"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("phase,mode,iteration,objective,residual"));
    assert!(lines.count() >= 3);
}

#[test]
fn infeasible_only_results_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tight.toml");
    std::fs::write(&path, "profile = \"desk\"\nt_total_s = 0.05\n").unwrap();
    let out = starfl(&["--config", path.to_str().unwrap(), "trial", "--scenario", "CONV"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn worker_override_must_be_a_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, "param = \"T\"\nvalues = [10.0]\nscenarios = [\"ES-ES\"]\ntrials = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_starfl"))
        .args(["sweep", spec.to_str().unwrap()])
        .env("STARFL_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
