use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "geometry": {"d": 1, "L": 3},
  "kernel": {"type": "nearest-neighbor", "params": {"mass": 0.5}},
  "profile": {"type": "constant", "params": {"active": 2, "dormant": 1}},
  "lambda": 1.0,
  "initial": {"type": "binomial", "theta": 0.5},
  "horizon": 2.0,
  "snapshots": [0.0, 1.0, 2.0],
  "replicates": 50,
  "seed": 7,
  "dual": {"particles": [{"site": 0, "state": "A"}, {"site": 1, "state": "D"}]}
}"#;

fn seedbank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seedbank"))
        .args(args)
        .env("SEEDBANK_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(&path, CONFIG).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_config_is_a_config_error() {
    let out = seedbank(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read config"));
}

#[test]
fn invalid_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = seedbank(&["run", "--config", &cfg, "--override", "lambda=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn zero_horizon_writes_only_the_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = seedbank(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--override",
        "horizon=0",
        "--override",
        "snapshots=[]",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(out_dir.join("snapshots.csv")).unwrap();
    let times: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(times.len(), 50 * 3);
    assert!(times.iter().all(|t| *t == "0"));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out_dir = dir.path().join(name);
            let out = seedbank(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
            assert!(out.status.success());
            out_dir
        })
        .collect();
    for file in [
        "snapshots.csv",
        "summary.json",
        "survival.csv",
        "partitions.json",
    ] {
        assert_eq!(
            fs::read(runs[0].join(file)).unwrap(),
            fs::read(runs[1].join(file)).unwrap(),
            "{file} differs"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(runs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn different_seed_changes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let read = |seed: &str| {
        let out_dir = dir.path().join(seed);
        let out = seedbank(&[
            "run",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        fs::read(out_dir.join("snapshots.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}

#[test]
fn gzip_flag_compresses_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = seedbank(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--gzip",
    ]);
    assert!(out.status.success());
    let bytes = fs::read(out_dir.join("snapshots.csv.gz")).unwrap();
    assert_eq!(&bytes[..2], &[0x1f, 0x8b]);
    assert!(!out_dir.join("snapshots.csv").exists());
}

#[test]
fn quick_verification_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = seedbank(&[
        "verify",
        "--suite",
        "quick",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn injected_fault_fails_verification() {
    let out = seedbank(&["verify", "--suite", "quick", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn oracle_dumps_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("oracle");
    let out = seedbank(&[
        "oracle",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in [
        "forward_generator.txt",
        "dual_generator.txt",
        "duality_matrix.txt",
        "oracle.json",
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let info: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("oracle.json")).unwrap()).unwrap();
    assert!(info["generator_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn kernel_check_reports_and_requires_gamma_for_polynomial_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("kc");
    let out = seedbank(&[
        "kernel-check",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out_dir.join("kernel_check.json").exists());
    let out = seedbank(&["kernel-check", "--config", &cfg, "--mode", "polynomial"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let first = dir.path().join("first");
    let out = seedbank(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "99",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(first.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["pass"] == true));
    let replay = dir.path().join("replay");
    let out = seedbank(&[
        "run",
        "--config",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        replay.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in [
        "snapshots.csv",
        "summary.json",
        "survival.csv",
        "partitions.json",
    ] {
        assert_eq!(
            fs::read(first.join(file)).unwrap(),
            fs::read(replay.join(file)).unwrap()
        );
    }
}
