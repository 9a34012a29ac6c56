use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

/// Light traffic keeps every command here to a few seconds.
const SMALL: &str = "[arrivals]\ndaily_volume = 300.0\n\n[training]\nwarmup = 50\ndays = 1\n";

fn pickfleet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pickfleet")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[fleet]\nhumnas = 3\n").unwrap();
    let out = pickfleet(&["evaluate", "--config", cfg.to_str().unwrap(), "--policy", "myopic-ilp", "--days", "1"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_config_file_exits_2() {
    let out = pickfleet(&["evaluate", "--config", "/nonexistent/x.toml", "--policy", "myopic-ilp", "--days", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_policy_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = pickfleet(&["evaluate", "--config", &cfg, "--policy", "myopic-xyz", "--days", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn corrupt_checkpoint_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let ckpt = dir.path().join("junk.bin");
    fs::write(&ckpt, b"not a checkpoint").unwrap();
    let policy = format!("neuradp:{}", ckpt.display());
    let out = pickfleet(&["evaluate", "--config", &cfg, "--policy", &policy, "--days", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn generated_orders_replay_and_reject_tampering() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let trace = dir.path().join("orders.csv");
    let out = pickfleet(&["gen-orders", "--config", &cfg, "--out", trace.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code(&out), 0);

    let day = dir.path().join("day.jsonl");
    let out = pickfleet(&[
        "replay",
        "--config",
        &cfg,
        "--trace",
        trace.to_str().unwrap(),
        "--policy",
        "myopic-hf-20",
        "--day-trace",
        day.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(stats["orders_seen"].as_u64().unwrap() > 0);
    assert!(fs::read_to_string(&day).unwrap().lines().count() >= 288);

    // a deadline the arrival model could not have produced
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut cols: Vec<&str> = lines[1].split(',').collect();
    let late = cols.last().unwrap().parse::<u64>().unwrap() + 7;
    let late = late.to_string();
    *cols.last_mut().unwrap() = &late;
    lines[1] = cols.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n")).unwrap();
    let out = pickfleet(&["replay", "--config", &cfg, "--trace", bad.to_str().unwrap(), "--policy", "myopic-ilp"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn several_days_get_numbered_traces() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = pickfleet(&[
        "gen-orders",
        "--config",
        &cfg,
        "--days",
        "2",
        "--out",
        dir.path().join("t.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("t-000.csv").exists() && dir.path().join("t-001.csv").exists());
}

#[test]
fn train_then_evaluate_against_myopic() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let ckpt = dir.path().join("net.bin");
    let out = pickfleet(&["train", "--config", &cfg, "--out", ckpt.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    let log = fs::read_to_string(dir.path().join("net.log.csv")).unwrap();
    assert!(log.starts_with("day,step,loss,mean_target"));

    let results = dir.path().join("results");
    fs::create_dir(&results).unwrap();
    let policy = format!("neuradp:{},myopic-ilp", ckpt.display());
    let out = pickfleet(&[
        "evaluate",
        "--config",
        &cfg,
        "--policy",
        &policy,
        "--days",
        "2",
        "--out",
        results.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(results.join("evaluation.csv").exists() && results.join("evaluation.json").exists());
}

#[test]
fn sweep_runs_each_value() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = pickfleet(&[
        "sweep",
        "--config",
        &cfg,
        "--dim",
        "capacity",
        "--values",
        "2,3",
        "--policy",
        "myopic-hf-20",
        "--days",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("== ").count(), 2);
}
