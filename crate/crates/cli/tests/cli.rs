use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quadblow_core::ensemble::EnsembleResult;
use quadblow_core::io::read_trajectory_csv;
use quadblow_core::spherical::BlowupCertificate;
use serde_json::Value;

fn quadblow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadblow"))
        .args(args)
        .env_remove("QUADBLOW_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn matrix_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"d":2,"entries":[-1,0,0,1]}"#);
    let out = quadblow(&["matrix", "--input", s(&a), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["forward_blowup_time"], 1.0);
    assert_eq!(v["backward_blowup_time"], -1.0);
    assert_eq!(v["seed"], 3);
}

#[test]
fn degenerate_degree_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.json", r#"{"dim":2,"coeffs":[1,0,0,0,0,0,0,0]}"#);
    let out = quadblow(&["degree", "--input", s(&q), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("degenerate_direction"), "{stderr}");
}

#[test]
fn degree_of_angle_doubling() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.json", r#"{"dim":2,"coeffs":[1,0,0,-1,0,1,1,0]}"#);
    let v = stdout_json(&quadblow(&["degree", "--input", s(&q), "--seed", "1"]));
    assert_eq!(v["degree"], 2);
    assert_eq!(v["lefschetz"], -1);
}

#[test]
fn ensemble_is_reproducible() {
    let run = || {
        let out = quadblow(&["mc-q2", "--d", "2", "--samples", "1000", "--seed", "1"]);
        assert_eq!(out.status.code(), Some(0));
        let mut v = stdout_json(&out);
        v.as_object_mut().unwrap().remove("wall_time_seconds");
        v
    };
    assert_eq!(run(), run());
}

#[test]
fn ensemble_output_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q1.json");
    let out = quadblow(&["mc-q1", "--dim", "2", "--samples", "20", "--seed", "5", "--output", s(&path)]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let res: EnsembleResult = serde_json::from_str(&text).unwrap();
    assert_eq!(res.spec.master_seed, 5);
    assert_eq!(res.successes + res.failures, 20);
    assert_eq!(serde_json::to_value(&res).unwrap(), serde_json::from_str::<Value>(&text).unwrap());
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"d":1,"entries":[-2]}"#);
    let target = write(dir.path(), "out.json", "keep");
    let out = quadblow(&["matrix", "--input", s(&a), "--output", s(&target)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(&target).unwrap(), "keep");
    let out = quadblow(&["matrix", "--input", s(&a), "--output", s(&target), "--force"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(v["forward_blowup_time"], 0.5);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(quadblow(&["matrix", "--bogus"]).status.code(), Some(2));
    assert_eq!(quadblow(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(quadblow(&["mc-q2", "--d", "2", "--samples", "nope"]).status.code(), Some(2));
}

#[test]
fn bad_input_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"d":2,"entries":[1,2,3]}"#);
    let out = quadblow(&["matrix", "--input", s(&a)]);
    assert_eq!(out.status.code(), Some(1));
    let line = String::from_utf8_lossy(&out.stderr);
    let err_line = line.lines().find(|l| l.starts_with('{')).expect("json error line");
    let v: Value = serde_json::from_str(err_line).unwrap();
    assert!(v["error"].is_string() && v["message"].is_string(), "{v}");
    assert_ne!(v["error"], "usage");
}

#[test]
fn seed_is_echoed_and_env_fallback_works() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"d":1,"entries":[1]}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_quadblow"))
        .args(["matrix", "--input", s(&a)])
        .env("QUADBLOW_SEED", "4242")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed=4242"));
    assert_eq!(stdout_json(&out)["seed"], 4242);

    let out = quadblow(&["matrix", "--input", s(&a)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed="));
    assert!(stdout_json(&out)["seed"].is_u64());
}

#[test]
fn integrate_csv_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.json", r#"{"dim":1,"coeffs":[-1]}"#);
    let x0 = write(dir.path(), "x0.json", r#"{"coords":[-1.0]}"#);
    let csv = dir.path().join("traj.csv");
    let out = quadblow(&[
        "integrate", "--input", s(&q), "--x0", s(&x0), "--format", "csv", "--output", s(&csv), "--seed", "0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("traj.json")).unwrap()).unwrap();
    assert_eq!(side["status"], "BlowupDetected");
    assert!((side["estimated_time"].as_f64().unwrap() - 1.0).abs() < 1e-5);
    let rows = read_trajectory_csv(std::io::BufReader::new(std::fs::File::open(&csv).unwrap())).unwrap();
    assert_eq!(rows.len() as u64, side["steps"].as_u64().unwrap() + 1);
}

#[test]
fn search_blowup_certificate_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.json", r#"{"dim":2,"coeffs":[1,0,0,-1,0,1,1,0]}"#);
    let out = quadblow(&["search-blowup", "--input", s(&q), "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let cert: BlowupCertificate = serde_json::from_slice(&out.stdout).unwrap();
    assert!(cert.is_verified());
    assert_eq!(cert.predicted_time, 1.0);
}

#[test]
fn csv_rejected_where_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"d":1,"entries":[1]}"#);
    assert_eq!(quadblow(&["matrix", "--input", s(&a), "--format", "csv"]).status.code(), Some(2));
}
