use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn loctask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loctask")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SHORT: &str = "duration = 30\n";

#[test]
fn run_writes_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("run");
    let o = loctask(&["run", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let series = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let mut lines = series.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,time,agent,target,entropy,score,torque_norm,assigned_target,in_fov"
    );
    // 31 samples x 2 agents x 8 targets
    assert_eq!(lines.count(), 31 * 2 * 8);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 3);
    assert!(summary["fuel"].as_f64().unwrap() >= 0.0);
    assert!(summary["clipped_integral"].as_f64().unwrap() >= 0.0);
    assert!(summary["switch_count"].is_u64());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert!(loctask(&["run", "--config", &cfg, "--seed", "8", "--out", out.to_str().unwrap()]).status.success());
    }
    assert_eq!(fs::read(a.join("timeseries.csv")).unwrap(), fs::read(b.join("timeseries.csv")).unwrap());
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn sweep_table_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("sweep");
    let o = loctask(&[
        "sweep", "--config", &cfg, "--axis", "depth", "--values", "1,2", "--seeds", "3", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "label,mean_F,ci_F,mean_C,ci_C,n_runs");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("depth=1,") && rows[1].ends_with(",3"));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 3);
}

#[test]
fn compare_lists_cbba_then_each_dwell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("cmp");
    let o = loctask(&["compare", "--config", &cfg, "--hysteresis", "5,20", "--seeds", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("summary.csv")).unwrap();
    let labels: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["cbba", "hysteresis=5", "hysteresis=20"]);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();

    let bad_key = write_config(dir.path(), "durration = 30\n");
    let o = loctask(&["run", "--config", &bad_key, "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("durration"));

    let o = loctask(&["run", "--config", "/nonexistent/cfg.toml", "--out", out]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = write_config(dir.path(), SHORT);
    let o = loctask(&["sweep", "--config", &cfg, "--axis", "gamma", "--values", "1", "--seeds", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for axis in ["depth", "mu", "alpha", "hysteresis", "algorithm"] {
        assert!(err.contains(axis), "{err}");
    }

    let o = loctask(&["sweep", "--config", &cfg, "--axis", "depth", "--values", "0", "--seeds", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
}
