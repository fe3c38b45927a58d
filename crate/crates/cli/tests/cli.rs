use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qchi2(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qchi2"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn diagonal_state(diag: &[f64]) -> String {
    let d = diag.len();
    let rows: Vec<Value> = (0..d)
        .map(|i| {
            Value::Array(
                (0..d)
                    .map(|j| serde_json::json!([if i == j { diag[i] } else { 0.0 }, 0.0]))
                    .collect(),
            )
        })
        .collect();
    serde_json::json!({ "dim": d, "matrix": rows }).to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn xi_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("mm4.json"), diagonal_state(&[0.25; 4])).unwrap();
    fs::write(p.join("half.json"), diagonal_state(&[0.5, 0.5])).unwrap();
    fs::write(p.join("pure.json"), diagonal_state(&[1.0, 0.0])).unwrap();

    let o = qchi2(p, &["xi", "mm4.json"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0.800000"));

    let o = qchi2(p, &["xi", "half.json"]);
    assert!(stdout(&o).contains("0.666667"));

    let o = qchi2(p, &["xi", "pure.json", "--out", "xi.json"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("rank deficient"));
    let v: Value = serde_json::from_str(&fs::read_to_string(p.join("xi.json")).unwrap()).unwrap();
    assert!((v["xi"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_state_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), diagonal_state(&[0.5, 0.6])).unwrap();
    let o = qchi2(dir.path(), &["xi", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trace"));

    let o = qchi2(dir.path(), &["validate", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optimal_povm_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("q.json"), diagonal_state(&[0.7, 0.3])).unwrap();
    fs::write(p.join("t.json"), diagonal_state(&[0.5, 0.3, 0.2])).unwrap();

    assert!(qchi2(p, &["optimal-povm", "q.json", "--out", "dq.json"]).status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(p.join("dq.json")).unwrap()).unwrap();
    assert_eq!(v["degrees_of_freedom"], 3);
    assert_eq!(v["flattened"]["elements"].as_array().unwrap().len(), 6);

    assert!(qchi2(p, &["optimal-povm", "t.json", "--out", "dt.json"]).status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(p.join("dt.json")).unwrap()).unwrap();
    assert_eq!(v["degrees_of_freedom"], 8);
    assert_eq!(v["flattened"]["elements"].as_array().unwrap().len(), 12);

    // The output doubles as a design file.
    let o = qchi2(p, &["validate", "dt.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_then_test_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("sigma.json"), diagonal_state(&[0.7, 0.3])).unwrap();
    assert!(qchi2(p, &["optimal-povm", "sigma.json", "--out", "design.json"]).status.success());
    let plan = serde_json::json!({
        "design": "design.json",
        "rho": "sigma.json",
        "n": 3000,
        "seed": 9
    });
    fs::write(p.join("plan.json"), plan.to_string()).unwrap();
    assert!(qchi2(p, &["simulate", "plan.json", "--out", "record.json"]).status.success());

    let o = qchi2(p, &["test", "record.json", "sigma.json", "--out", "report.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
    let t = v["statistic"]["value"].as_f64().or_else(|| v["statistic"].as_f64());
    assert!(t.is_some(), "report: {v}");
    assert!(t.unwrap() >= 0.0);
}

#[test]
fn verify_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = qchi2(dir.path(), &["verify", "--all", "--trials", "50", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert_eq!(out.matches("PASS").count(), 3, "{out}");
}
