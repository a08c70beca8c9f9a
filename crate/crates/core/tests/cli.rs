//! End-to-end tests of the `coalesce` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coalesce::kernels::gaussian_density;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coalesce"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("COALESCE_THREADS").output().expect("spawn binary")
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

#[test]
fn kernel_eval_examples() {
    let out = run(&["kernel-eval", "--what", "rho1", "--t", "1"]);
    assert!(out.status.success());
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    assert!((rows[0][0] - 0.5641895835).abs() < 1e-10);

    let out = run(&["kernel-eval", "--what", "rho2", "--t", "1", "--z", "0"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows, vec![vec![0.0, 0.0]]);
}

#[test]
fn kernel_grid_is_symmetric() {
    let out = run(&["kernel-eval", "--what", "G", "--t", "1", "--grid", "64"]);
    assert!(out.status.success());
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 64 * 64);
    for i in 0..64 {
        for j in 0..64 {
            let (a, b) = (rows[i * 64 + j][2], rows[j * 64 + i][2]);
            assert!((a - b).abs() <= 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["kernel-eval", "--what", "nope", "--t", "1"]).status.code(), Some(2));
    assert_eq!(run(&["kernel-eval", "--what", "rho1", "--t", "-1"]).status.code(), Some(2));
    let out = run(&["run", "--config", "/definitely/missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read config"));
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn only_subdir(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn run_is_deterministic_across_threads_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"kind": "clt_single", "t": 1.0, "n": 16, "f": "cos(1)", "replicas": 100, "seed": 4}"#,
    );
    let out_dir = tmp.path().join("results");
    let a = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", "1"]);
    let b = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .env("COALESCE_THREADS", "3")
        .output()
        .unwrap();
    for o in [&a, &b] {
        assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let runs = only_subdir(&out_dir);
    assert_eq!(runs.len(), 2, "each run gets its own directory");
    let csv0 = fs::read(runs[0].join("replicas.csv")).unwrap();
    let csv1 = fs::read(runs[1].join("replicas.csv")).unwrap();
    assert_eq!(csv0, csv1);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert!(manifest["finished_unix"].as_f64().is_some());

    let seeded = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(matches!(seeded.status.code(), Some(0) | Some(1)));
    let runs = only_subdir(&out_dir);
    assert_ne!(fs::read(runs[2].join("replicas.csv")).unwrap(), csv0);

    let report = run(&["report", "--in", runs[0].to_str().unwrap(), "--svg"]);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs[0].join("summary.json")).unwrap()).unwrap();
    let sigma2 = summary["predicted"]["sigma2"].as_f64().unwrap();
    let hist = fs::read_to_string(runs[0].join("report/hist_x.csv")).unwrap();
    let rows = csv_rows(&hist);
    let mass: f64 = rows.iter().map(|r| r[4]).sum();
    assert!((mass - 1.0).abs() < 1e-9);
    for r in &rows {
        assert!((r[6] - gaussian_density(0.0, sigma2, r[2])).abs() < 1e-15);
    }
    assert!(runs[0].join("report/hist_x.svg").is_file());
    assert!(runs[0].join("report/kernel_curves.csv").is_file());
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let small = write_config(
        tmp.path(),
        r#"{"kind": "clt_single", "t": 1.0, "n": 16, "f": "cos(1)", "replicas": 10}"#,
    );
    assert_eq!(run(&["run", "--config", small.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]).status.code(), Some(2));
    let bad = write_config(tmp.path(), r#"{"kind": "teleport", "replicas": 100}"#);
    assert_eq!(run(&["run", "--config", bad.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]).status.code(), Some(2));
    let threads = bin()
        .args(["run", "--config", small.to_str().unwrap()])
        .env("COALESCE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn empty_report_dir_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["report", "--in", tmp.path().to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["report", "--in", "/definitely/missing"]).status.code(), Some(2));
}
