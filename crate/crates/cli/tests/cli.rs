//! End-to-end runs of the `rescore` binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rescore"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn simulate(dir: &Path, extra: &[&str]) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("data.csv");
    let graph = dir.join("truth.json");
    let mut cmd = bin();
    cmd.args([
        "simulate", "--graph", "er", "--k", "1", "--d", "4", "--sem", "linear", "--n", "300",
        "--seed", "7", "--out",
    ])
    .arg(&data)
    .arg("--graph-out")
    .arg(&graph)
    .args(extra);
    run_ok(&mut cmd);
    (data, graph)
}

#[test]
fn simulate_fit_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, truth) = simulate(dir.path(), &[]);
    let cont = dir.path().join("b.csv");
    let est = dir.path().join("est.json");
    run_ok(bin().args([
        "fit",
        "--method",
        "notears",
        "--data",
        data.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--thresh",
        "0.3",
        "--out-cont",
        cont.to_str().unwrap(),
        "--out-graph",
        est.to_str().unwrap(),
    ]));
    assert!(cont.exists() && est.exists());
    // continuous matrix is a d x d data file
    let cont_text = std::fs::read_to_string(&cont).unwrap();
    assert_eq!(cont_text.lines().count(), 4);
    assert_eq!(cont_text.lines().next().unwrap().split(',').count(), 4);

    let stdout = run_ok(bin().args([
        "eval",
        "--est",
        est.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--sid",
    ]));
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(report["tpr"].is_number());
    assert!(report["fdr"].is_number());
    assert!(report["shd"].is_number());
    assert!(report["sid"].is_number());
}

#[test]
fn eval_without_sid_omits_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let (_, truth) = simulate(dir.path(), &[]);
    let stdout = run_ok(bin().args([
        "eval",
        "--est",
        truth.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
    ]));
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["tpr"], 1.0);
    assert_eq!(report["shd"], 0.0);
    assert!(report.get("sid").is_none());
}

#[test]
fn rescore_writes_weights_file() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = simulate(dir.path(), &[]);
    let cont = dir.path().join("b.csv");
    let est = dir.path().join("est.json");
    let weights = dir.path().join("weights.txt");
    run_ok(bin().args([
        "rescore",
        "--method",
        "notears",
        "--data",
        data.to_str().unwrap(),
        "--tau",
        "0.8",
        "--inner",
        "exact",
        "--out-cont",
        cont.to_str().unwrap(),
        "--out-graph",
        est.to_str().unwrap(),
        "--weights-out",
        weights.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&weights).unwrap();
    let values: Vec<f64> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 300);
    let sum: f64 = values.iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    let floor = 0.8 / 300.0;
    let cap = 1.0 / (0.8 * 300.0);
    assert!(values.iter().all(|&w| w >= floor - 1e-12 && w <= cap + 1e-12));
}

#[test]
fn simulate_writes_labels_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    let data = dir.path().join("data.csv");
    let graph = dir.path().join("truth.json");
    run_ok(bin().args([
        "simulate", "--graph", "er", "--k", "1", "--d", "4", "--sem", "linear", "--n", "100",
        "--noise", "hetero", "--seed", "3", "--header", "--out",
    ])
    .arg(&data)
    .arg("--graph-out")
    .arg(&graph)
    .arg("--labels-out")
    .arg(&labels));
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("x1,x2,x3,x4"));
    assert_eq!(text.lines().count(), 101);
    let label_text = std::fs::read_to_string(&labels).unwrap();
    assert_eq!(label_text.lines().count(), 100);
    let disadvantaged = label_text
        .lines()
        .filter(|l| l.starts_with("0,"))
        .count();
    assert_eq!(disadvantaged, 10);
}

#[test]
fn bench_subcommand_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.json");
    std::fs::write(
        &config,
        r#"{
  "scenarios": [
    {
      "graph": "er", "k": 1, "d": 4, "sem": "linear", "n": 200,
      "noise": {"kind": "homo"},
      "methods": [
        {"kind": "random"},
        {"kind": "fit", "backbone": "notears", "lambda": 0.05}
      ],
      "trials": 2,
      "base_seed": 11
    }
  ]
}"#,
    )
    .unwrap();
    let out = dir.path().join("results");
    run_ok(bin().args([
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.starts_with("scenario,method,trial,seed,tpr,fdr,shd,sid,runtime_s"));
    assert_eq!(results.lines().count(), 5); // header + 4 rows
    assert!(out.join("aggregates.csv").exists());
}

#[test]
fn flags_readable_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (_, truth) = simulate(dir.path(), &[]);
    let stdout = run_ok(
        bin()
            .arg("eval")
            .env("RESCORE_EST", truth.to_str().unwrap())
            .env("RESCORE_TRUTH", truth.to_str().unwrap()),
    );
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["shd"], 0.0);
}
