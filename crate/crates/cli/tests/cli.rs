use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aeroman"))
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/reference_vehicle.json")
}

fn run(cmd: &mut Command) -> (i32, Value, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    let stdout = String::from_utf8(stdout).unwrap();
    // simulate prints one document per run; tests use single runs
    let json = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    (status.code().unwrap(), json, String::from_utf8(stderr).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn allocate_reports_seven_nonnegative_thrusts() {
    let (code, v, _) = run(bin()
        .args(["allocate", "--layout"])
        .arg(reference())
        .args(["--wrench", "0 0 18.6 0 0 0"]));
    assert_eq!(code, 0);
    let l6: Vec<f64> = serde_json::from_value(v["lambda6"].clone()).unwrap();
    let l7: Vec<f64> = serde_json::from_value(v["lambda7"].clone()).unwrap();
    assert_eq!(l6.len(), 6);
    assert_eq!(l7.len(), 7);
    assert!(l7.iter().all(|&x| x >= 0.0));
    assert!((v["kappa"].as_f64().unwrap() - 3.9106).abs() < 1e-3);
    assert_eq!(v["saturated"].as_array().unwrap().len(), 7);
}

#[test]
fn allocate_flags_over_limit() {
    let (code, v, _) = run(bin()
        .args(["allocate", "--layout"])
        .arg(reference())
        .args(["--wrench", "0 0 400 0 0 0"]));
    assert_eq!(code, 0);
    let flags = v["saturated"].as_array().unwrap();
    assert!(flags.iter().any(|f| f.get("over_limit").is_some()));
}

#[test]
fn allocate_rejects_short_wrench() {
    let (code, _, err) = run(bin()
        .args(["allocate", "--layout"])
        .arg(reference())
        .args(["--wrench", "1 2 3"]));
    assert_eq!(code, 3);
    assert!(err.contains("6 numbers"));
}

#[test]
fn clearance_is_symmetric() {
    let one = |i: &str, j: &str| {
        let (code, v, _) = run(bin()
            .args(["clearance", "--layout"])
            .arg(reference())
            .args(["--pair", i, j]));
        assert_eq!(code, 0);
        v
    };
    let a = one("1", "2");
    let b = one("2", "1");
    let d = a["distance_m"].as_f64().unwrap();
    assert!((d - b["distance_m"].as_f64().unwrap()).abs() < 1e-6);
    assert!(d > 0.1 && d < 0.12);
    for k in 0..3 {
        let (x, y) = (a["p_i"][k].as_f64().unwrap(), b["p_j"][k].as_f64().unwrap());
        assert!((x - y).abs() < 1e-6);
    }
    assert_eq!(a["p_i"].as_array().unwrap().len(), 3);
}

#[test]
fn clearance_rejects_bad_index() {
    let (code, _, _) = run(bin()
        .args(["clearance", "--layout"])
        .arg(reference())
        .args(["--pair", "0", "8"]));
    assert_eq!(code, 3);
}

#[test]
fn missing_file_is_a_config_error() {
    let (code, _, _) = run(bin().args(["allocate", "--layout", "/nonexistent.json", "--wrench", "0 0 0 0 0 0"]));
    assert_eq!(code, 3);
}

#[test]
fn usage_errors_exit_with_config_code() {
    let (code, _, _) = run(bin().arg("frobnicate"));
    assert_eq!(code, 3);
    let (code, _, _) = run(bin().arg("--help"));
    assert_eq!(code, 0);
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "short.json", r#"{"duration": 0.5}"#);
    let out = dir.path().join("run");
    let (code, v, _) = run(bin()
        .args(["simulate", "--scenario"])
        .arg(&s)
        .arg("--out")
        .arg(&out)
        .args(["--dt", "0.002"]));
    assert_eq!(code, 0);
    assert_eq!(v["completed"], Value::Bool(true));
    let csv = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    // 250 steps, every 10th logged, plus t = 0
    assert_eq!(csv.lines().count(), 1 + 26);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["dt"].as_f64(), Some(0.002));
}

#[test]
fn simulate_abort_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "tilted.json",
        r#"{"duration": 0.2, "initial": {"pose": [0, 0, 0, 0, 1.565, 0]}}"#,
    );
    let out = dir.path().join("run");
    let (code, _, err) = run(bin().args(["simulate", "--scenario"]).arg(&s).arg("--out").arg(&out));
    assert_eq!(code, 2);
    assert!(err.contains("aborted"));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], Value::Bool(false));
    assert!(summary["abort"].is_object());
}

#[test]
fn simulate_bad_config_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "bad.json", r#"{"dt": -1}"#);
    let (code, _, _) = run(bin().args(["simulate", "--scenario"]).arg(&s).arg("--out").arg(dir.path()));
    assert_eq!(code, 3);
    let s = write(dir.path(), "broken.json", "{");
    let (code, _, _) = run(bin().args(["simulate", "--scenario"]).arg(&s).arg("--out").arg(dir.path()));
    assert_eq!(code, 3);
}

#[test]
fn sweep_isolates_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"duration": 0.1}"#);
    let b = write(dir.path(), "b.json", r#"{"duration": 0.2, "disturbance": {"kind": "none"}}"#);
    let out = dir.path().join("sweep");
    let status = bin()
        .args(["simulate", "--sweep", "--scenario"])
        .arg(&a)
        .arg("--scenario")
        .arg(&b)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let rows = |name: &str| {
        std::fs::read_to_string(out.join(name).join("timeseries.csv"))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(rows("00-a"), 1 + 11);
    assert_eq!(rows("01-b"), 1 + 21);
}

#[test]
fn design_emits_a_usable_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "design.json",
        r#"{"lhs_samples": 50, "top_k": 2, "search": {"max_evals": 200}}"#,
    );
    let out = dir.path().join("layout.json");
    let (code, v, _) = run(bin()
        .args(["design", "--config"])
        .arg(&cfg)
        .args(["--seed", "3", "--out"])
        .arg(&out));
    assert_eq!(code, 0);
    assert_eq!(v["evaluation"]["feasible"], Value::Bool(true));
    let progress = std::fs::read_to_string(dir.path().join("layout.progress.csv")).unwrap();
    assert_eq!(progress.lines().next(), Some("iter,mesh,J,feasible_count"));

    let (code, v, _) = run(bin().args(["clearance", "--layout"]).arg(&out).args(["--pair", "3", "7"]));
    assert_eq!(code, 0);
    assert!(v["distance_m"].as_f64().unwrap() >= 1e-2);
    let (code, _, _) = run(bin()
        .args(["allocate", "--layout"])
        .arg(&out)
        .args(["--wrench", "1 0 20 0 0.1 0"]));
    assert_eq!(code, 0);
}

#[test]
fn design_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "design.json", r#"{"eps1": 0}"#);
    let (code, _, _) = run(bin()
        .args(["design", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x.json")));
    assert_eq!(code, 3);
}
