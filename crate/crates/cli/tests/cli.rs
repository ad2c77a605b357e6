use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn ctmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctmdp")).args(args).output().expect("binary runs")
}

fn m3() -> String {
    fixture("M3.json").display().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn validate_accepts_m3_and_lists_every_violation() {
    let ok = ctmdp(&["validate", &m3()]);
    assert!(ok.status.success());
    assert_eq!(json(&ok)["valid"], true);

    let bad = ctmdp(&["validate", fixture("broken.json").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let body = json(&bad);
    assert_eq!(body["valid"], false);
    assert_eq!(body["violations"].as_array().unwrap().len(), 3);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(ctmdp(&["solve", &m3(), "--bogus"]).status.code(), Some(2));
    assert_eq!(ctmdp(&["reduce", &m3(), "--alpha", "-1"]).status.code(), Some(2));
    assert_eq!(ctmdp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_model_file_exits_with_one() {
    let out = ctmdp(&["solve", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn classify_reports_partition_and_zeta() {
    let body = json(&ctmdp(&["classify", &m3()]));
    let states = body["states"].as_array().unwrap();
    let classes: Vec<&str> = states.iter().map(|s| s["class"].as_str().unwrap()).collect();
    assert_eq!(classes, ["S3", "S1", "S2"]);
    let zeta: Vec<bool> = states.iter().map(|s| s["in_zeta"].as_bool().unwrap()).collect();
    assert_eq!(zeta, [true, true, false]);
    assert_eq!(states[2]["f_star"], "a0");
}

#[test]
fn reduce_puts_deficit_mass_on_the_cemetery() {
    let body = json(&ctmdp(&["reduce", &m3(), "--alpha", "0.5"]));
    assert_eq!(body["cemetery"], "x_inf");
    let row = &body["kernel"]["s0/a1"];
    assert!((row["s2"].as_f64().unwrap() - 0.8).abs() < 1e-15);
    assert!((row["x_inf"].as_f64().unwrap() - 0.2).abs() < 1e-15);
}

#[test]
fn evaluate_the_lifted_policy() {
    let out = ctmdp(&["evaluate", &m3(), "--policy", fixture("M3_pi.json").to_str().unwrap()]);
    assert!(out.status.success());
    let body = json(&out);
    for v in body["from_initial"].as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 0.4).abs() < 1e-9);
    }
    assert_eq!(body["all_feasible"], true);
}

#[test]
fn simulate_defaults_to_the_optimal_policy() {
    let out = ctmdp(&["simulate", &m3(), "--n-traj", "20000", "--seed", "3", "--alpha", "0.5"]);
    assert!(out.status.success());
    let body = json(&out);
    assert!(body["occupancy"].is_object());
    assert!(body["discounted_occupation"].is_object());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"n_traj\": 20000"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["simulate", &m3(), "--n-traj", "5000", "--seed", "9"];
    let a = ctmdp(&args);
    let b = ctmdp(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(ctmdp(&["solve", &m3()]).stdout, ctmdp(&["solve", &m3()]).stdout);
}

#[test]
fn output_flag_writes_the_same_document() {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("m3_solve.json");
    let out = ctmdp(&["solve", &m3(), "-o", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read(&path).unwrap();
    assert_eq!(written, ctmdp(&["solve", &m3()]).stdout);
}

#[test]
fn verify_single_model_and_small_corpus() {
    let out = ctmdp(&["verify", &m3()]);
    let reports = json(&out);
    let identities: Vec<&str> = reports.as_array().unwrap().iter().map(|r| r["identity"].as_str().unwrap()).collect();
    assert!(identities.contains(&"roundtrip"));
    // The 10-point grid cannot represent the optimal randomization 0.2 on M3.
    assert_eq!(out.status.code(), Some(1));

    let corpus = ctmdp(&["verify", "--corpus", "10", "--seed", "5"]);
    assert!(corpus.status.success(), "{}", String::from_utf8_lossy(&corpus.stdout));
}

#[test]
fn demo_ex1_shows_the_gap() {
    let out = ctmdp(&["demo-ex1", "--n-traj", "20000", "--seed", "1"]);
    assert!(out.status.success());
    let body = json(&out);
    assert_eq!(body["dtmdp_value"], 1.0);
    assert_eq!(body["gap_significant"], true);
}
