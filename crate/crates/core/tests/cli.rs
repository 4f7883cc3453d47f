mod common;

use std::process::{Command, Output};

use common::problem_path;
use sipsdp::sdp::{self, sdpa, Settings};

fn sipsdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sipsdp"))
        .args(args)
        .output()
        .unwrap()
}

fn path(name: &str) -> String {
    problem_path(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_succeeds_and_is_deterministic() {
    let p = path("example2_sosconvex.json");
    let a = sipsdp(&["solve", &p, "--t", "1", "--no-timing"]);
    let b = sipsdp(&["solve", &p, "--t", "1", "--no-timing"]);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!((v["result"]["value"].as_f64().unwrap() - 0.80942).abs() < 1e-3);
}

#[test]
fn usage_errors_exit_1() {
    let out = sipsdp(&["solve", "/nonexistent/problem.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = sipsdp(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_record_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(problem_path("lambda_set2.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["constraint_p"][1]["exp"] = serde_json::json!([1]);
    let file = dir.path().join("bad.json");
    std::fs::write(&file, v.to_string()).unwrap();
    let out = sipsdp(&["solve", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("constraint_p record 1"));
}

#[test]
fn missing_tau_is_a_precondition() {
    let out = sipsdp(&[
        "boundary",
        &path("final_example.json"),
        "--r",
        "1",
        "--t",
        "1",
        "-N",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau_K"));
}

#[test]
fn boundary_with_no_samples_prints_header() {
    let out = sipsdp(&[
        "boundary",
        &path("lambda_set2.json"),
        "--r",
        "1",
        "--t",
        "1",
        "-N",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "angle,x1,x2,support_value\n");
}

#[test]
fn checks_report() {
    let p = path("example2_sosconvex.json");
    let out = sipsdp(&["check", &p, "sos-convex"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("true"));
    let out = sipsdp(&["check", &p, "eps-star", "2"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn homogenize_marks_generic_equality() {
    let out = sipsdp(&["homogenize", &path("final_example.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["notes"]["generic_equality"].is_string());
    assert_eq!(v["variables"]["y"].as_array().unwrap().len(), 4);
}

#[test]
fn export_sdpa_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("ex2.dat-s");
    let out = sipsdp(&[
        "export-sdpa",
        &path("example2_sosconvex.json"),
        "--which",
        "sosconvex-dsdp",
        "--t",
        "1",
        "-o",
        file.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let prob = sdpa::import_sdpa(&file).unwrap();
    let rep = sdp::solve(&prob, &Settings::default()).unwrap();
    assert!(
        (rep.primal_value - 0.809418).abs() < 1e-4,
        "{}",
        rep.primal_value
    );
}
