use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonstat-opt")).args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn sweep_into(dir: &Path, workers: &str) -> Output {
    cli(&[
        "sweep",
        "--out",
        dir.to_str().unwrap(),
        "--policy",
        "constant,idealized,adaptive,variance_adaptive",
        "--T",
        "500",
        "--alpha",
        "0.5",
        "--num-seeds",
        "10",
        "--workers",
        workers,
    ])
}

#[test]
fn sweep_writes_one_row_per_cell_with_exact_header() {
    let dir = TempDir::new().unwrap();
    let out = sweep_into(dir.path(), "2");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("config_hash,policy,T,alpha,seed,final_metric,bound_value,regret,oracle_queries,wall_time_ms")
    );
    assert_eq!(lines.count(), 40);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_worker_counts() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    for (dir, workers) in [(&a, "1"), (&b, "1"), (&c, "4")] {
        assert!(sweep_into(dir.path(), workers).status.success());
    }
    let read = |d: &TempDir| std::fs::read(d.path().join("results.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
}

#[test]
fn run_writes_trajectories() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["run", "--out", dir.path().to_str().unwrap(), "--policy", "adaptive", "--T", "200", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trajectories: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("trajectory_"))
        .collect();
    assert_eq!(trajectories.len(), 1);
    let text = std::fs::read_to_string(dir.path().join(&trajectories[0])).unwrap();
    assert_eq!(text.lines().next(), Some("k,eta,suboptimality_or_gradnormsq,estimator_value,true_level"));
    assert_eq!(text.lines().count(), 1 + 200);
    let hash = trajectories[0].trim_start_matches("trajectory_").trim_end_matches(".csv");
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.lines().nth(1).unwrap().starts_with(hash));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"problem": {"kind": "quadratic", "dim": 5, "n": 10}, "horizons": [100, 200], "seeds": [0, 1],
            "optimizer": {"policies": ["constant"]}}"#,
    )
    .unwrap();
    let out =
        cli(&["sweep", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--T", "150"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let horizons: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(horizons, ["150", "150"]);
}

#[test]
fn invalid_configuration_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["sweep", "--out", dir.path().to_str().unwrap(), "--policy", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["sweep", "--out", dir.path().to_str().unwrap(), "--T", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"unknown_field": 1}"#).unwrap();
    let out = cli(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["verify", "--suite", "nope", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_writes_a_machine_readable_report() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["verify", "--suite", "jensen", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("A1 PASS jensen"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(report[0]["id"], "A1");
    assert_eq!(report[0]["passed"], true);
    assert!(report[0]["measurements"].as_array().unwrap().len() >= 4);
}

#[test]
fn schedule_dump_lists_every_level() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["schedule-dump", "--out", dir.path().to_str().unwrap(), "--T", "20", "--alpha", "0.5"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("schedule_T20_alpha0.5.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "k,level");
    assert_eq!(rows.len(), 21);
    let levels: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(levels.iter().all(|&m| m > 0.0));
    assert_eq!(rows[20].split(',').next(), Some("20"));
}
