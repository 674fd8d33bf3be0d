use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fdg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = fdg(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn synthetic(dir: &Path) {
    let out = fdg(
        dir,
        &["gen", "--train", "train.fdgb", "--test", "test.fdgb", "--n-test", "10", "--seed", "5"],
    );
    assert!(out.status.success());
}

#[test]
fn fdg_report_fields() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "b.csv", "label,f0,f1\n0,1,0\n0,-1,0\n");
    write(dir.path(), "a.csv", "label,f0,f1\n0,0,3\n");
    let v = ok_json(dir.path(), &["fdg", "--base", "b.csv", "--aug", "a.csv"]);
    assert_eq!(v["command"], "fdg");
    let r = &v["results"];
    assert!((r["v_base"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((r["v_joint"].as_f64().unwrap() - 1.160964).abs() < 1e-6);
    assert!((r["fdg"].as_f64().unwrap() - 1.321928).abs() < 1e-6);
    assert!((r["lower_bound"].as_f64().unwrap() + 1.0 / 3.0).abs() < 1e-12);
    for key in ["config", "versions", "seed", "timestamp"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn partition_fixture_from_array_and_map() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "counts.json",
        "[5000, 2997, 1796, 1077, 645, 387, 232, 139, 83, 50]",
    );
    let v = ok_json(
        dir.path(),
        &["partition", "--counts", "counts.json", "--threshold", "0.9"],
    );
    assert_eq!(v["results"]["h"], 5);
    assert!((v["results"]["h_r"].as_f64().unwrap() - 0.92818).abs() < 1e-5);
    assert_eq!(v["results"]["imbalance_factor"], 100.0);

    write(dir.path(), "map.json", r#"{"7": 900, "3": 60, "4": 40}"#);
    let v = ok_json(dir.path(), &["partition", "--counts", "map.json"]);
    assert_eq!(v["results"]["ordered_classes"], serde_json::json!([7, 3, 4]));
    assert_eq!(v["results"]["h"], 2);
    assert_eq!(v["results"]["tail"], serde_json::json!([4]));
}

#[test]
fn domain_and_usage_exit_codes() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "even.json", r#"{"0": 90, "1": 10}"#);
    let out = fdg(dir.path(), &["partition", "--counts", "even.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no tail classes"));

    let out = fdg(dir.path(), &["partition", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fdg(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    write(dir.path(), "cfg.json", r#"{"threshold": 0.9, "extra": true}"#);
    write(dir.path(), "counts.json", "[10, 1]");
    let out = fdg(
        dir.path(),
        &["partition", "--counts", "counts.json", "--config", "cfg.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));

    write(dir.path(), "bad.fdgb", "FDGX");
    let out = fdg(dir.path(), &["volume", "--input", "bad.fdgb"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_is_echoed_and_flags_override() {
    let dir = TempDir::new().unwrap();
    synthetic(dir.path());
    write(
        dir.path(),
        "aug.json",
        r#"{"augmenter": {"kind": "feature_fusion"}, "seed": 11}"#,
    );
    let v = ok_json(
        dir.path(),
        &[
            "augment", "--input", "train.fdgb", "--output", "out.csv", "--config", "aug.json",
            "--seed", "12",
        ],
    );
    assert_eq!(v["config"]["augmenter"]["kind"], "feature_fusion");
    assert_eq!(v["config"]["seed"], 12);
    assert_eq!(v["seed"], 12);
    assert!(dir.path().join("out.csv").exists());
}

#[test]
fn reports_repeat_without_timestamp() {
    let dir = TempDir::new().unwrap();
    synthetic(dir.path());
    let run = |name: &str| {
        let out = fdg(
            dir.path(),
            &[
                "augment", "--input", "train.fdgb", "--output", "aug.fdgb", "--seed", "3",
                "--no-timestamp", "--report", name,
            ],
        );
        assert!(out.status.success());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert!(v.get("timestamp").is_none());
}

#[test]
fn sweep_writes_kept_sets_and_index() {
    let dir = TempDir::new().unwrap();
    synthetic(dir.path());
    let v = ok_json(
        dir.path(),
        &[
            "sweep", "--input", "train.fdgb", "--out-dir", "sets", "--mode", "stochastic",
            "--m-generate", "100", "--m-keep", "50", "--seed", "1",
        ],
    );
    let index: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("sets/index.json")).unwrap())
            .unwrap();
    let entries = index.as_array().unwrap();
    assert_eq!(entries.len(), 50);
    let fdgs: Vec<f64> = entries.iter().map(|e| e["fdg_tail"].as_f64().unwrap()).collect();
    assert!(fdgs.windows(2).all(|w| w[0] <= w[1]));
    for e in entries {
        assert!(dir.path().join("sets").join(e["file"].as_str().unwrap()).exists());
    }
    let files = std::fs::read_dir(dir.path().join("sets")).unwrap().count();
    assert_eq!(files, 51);
    assert_eq!(v["results"]["sets"].as_array().unwrap().len(), 50);
    assert_eq!(v["config"]["sweep"]["m_keep"], 50);
}

#[test]
fn select_meets_quota() {
    let dir = TempDir::new().unwrap();
    synthetic(dir.path());
    let out = fdg(
        dir.path(),
        &[
            "augment", "--input", "train.fdgb", "--output", "pool.fdgb", "--method",
            "variance_transfer",
        ],
    );
    assert!(out.status.success());
    let max = ok_json(
        dir.path(),
        &[
            "select", "--input", "train.fdgb", "--pool", "pool.fdgb", "--output", "max.fdgb",
            "--k", "20", "--direction", "maximize",
        ],
    );
    let min = ok_json(
        dir.path(),
        &[
            "select", "--input", "train.fdgb", "--pool", "pool.fdgb", "--output", "min.fdgb",
            "--k", "20", "--direction", "minimize",
        ],
    );
    for (class, plan) in max["results"]["per_class"].as_object().unwrap() {
        let quota = plan["plan"]["quota"].as_u64().unwrap() as usize;
        assert_eq!(plan["indices"].as_array().unwrap().len(), quota);
        let hi = plan["plan"]["achieved_fdg"].as_f64().unwrap();
        let lo = min["results"]["per_class"][class]["plan"]["achieved_fdg"]
            .as_f64()
            .unwrap();
        assert!(hi >= lo);
    }
}

#[test]
fn experiment_writes_csv() {
    let dir = TempDir::new().unwrap();
    let v = ok_json(
        dir.path(),
        &["experiment", "--seeds", "2", "--csv", "rows.csv", "--n-test", "200"],
    );
    assert_eq!(v["results"]["summary"]["seeds"], 2);
    let csv = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("regime,seed,fdg_tail,balanced_accuracy"));
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "counts.json", "[10, 1]");
    let out = Command::new(env!("CARGO_BIN_EXE_fdg"))
        .current_dir(dir.path())
        .env("FDG_THREADS", "1")
        .args(["partition", "--counts", "counts.json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_fdg"))
        .current_dir(dir.path())
        .env("FDG_THREADS", "many")
        .args(["partition", "--counts", "counts.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
