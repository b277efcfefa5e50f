//! End-to-end runs of the `nnreach` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nnreach_cli::Scenario;
use tempfile::TempDir;

const IDENTITY: &str = r#"{"inputs":[0],"output":1,"state_dim":2,"disturbance_dim":0,
 "nodes":[{"id":0,"op":"input","dim":2,"inputs":[]},
 {"id":1,"op":"affine","dim":2,"inputs":[0],"W":[[1,0],[0,1]],"b":[0,0]}]}"#;

fn nnreach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnreach")).args(args).output().expect("binary runs")
}

fn scenario(dir: &Path, extra: &str) -> String {
    fs::write(dir.join("net.json"), IDENTITY).unwrap();
    let text = format!(
        r#"{{"network":"net.json","x0":{{"lo":[0,0],"hi":[1,1]}},"horizon":2,"framework":"both",
        "propagator":{{"method":"lp"}},"template":"box","samples":50{extra}}}"#
    );
    let path = dir.join("scenario.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn identity_scenario_is_safe() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), r#","avoid":[{"lo":[5,5],"hi":[6,6]}]"#);
    let out = dir.path().join("out");
    let o = nnreach(&["run", &s, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["recursive.json", "one-shot.json", "boxes.csv", "comparison.csv", "trajectories.csv", "verdicts.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let boxes = fs::read_to_string(out.join("boxes.csv")).unwrap();
    // identity dynamics keep the unit box at every step
    assert!(boxes.lines().skip(1).all(|l| l.ends_with(",0,0,1,1")), "{boxes}");
}

#[test]
fn overlapping_avoid_set_is_unknown() {
    let dir = TempDir::new().unwrap();
    let s = scenario(dir.path(), r#","avoid":[{"lo":[0.5,0.5],"hi":[2,2]}]"#);
    let out = dir.path().join("out");
    let o = nnreach(&["run", &s, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("unknown"));
}

#[test]
fn malformed_scenario_fails() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("net.json"), IDENTITY).unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"network":"net.json","x0":{"lo":[0],"hi":[1]},"horizon":2,"framework":"both","propagator":{"method":"lp"},"template":"box"}"#).unwrap();
    let o = nnreach(&["run", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("x0"));

    let typo = dir.path().join("typo.json");
    fs::write(&typo, r#"{"network":"net.json","x0":{"lo":[0,0],"hi":[1,1]},"horizon":2,"framwork":"both"}"#).unwrap();
    assert_eq!(code(&nnreach(&["run", typo.to_str().unwrap()])), 1);
}

#[test]
fn validate_reports_shape() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("net.json");
    fs::write(&p, IDENTITY).unwrap();
    let o = nnreach(&["validate", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("state dim 2"));

    fs::write(&p, r#"{"inputs":[0],"output":3,"nodes":[]}"#).unwrap();
    assert_eq!(code(&nnreach(&["validate", p.to_str().unwrap()])), 1);
}

#[test]
fn unknown_demo_fails() {
    let dir = TempDir::new().unwrap();
    let o = nnreach(&["demo", "nope", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn residual_demo_writes_results() {
    let dir = TempDir::new().unwrap();
    let o = nnreach(&["demo", "cartpole-residual", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let root = dir.path().join("cartpole-residual");
    assert!(root.join("network.json").exists());
    assert!(root.join("boxes.csv").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("one-shot inside recursive at every step: true"));
}

#[test]
fn counterexample_demo_finds_a_gap() {
    let dir = TempDir::new().unwrap();
    let o = nnreach(&["demo", "counterexample-forward", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(dir.path().join("counterexample-forward/gap_report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["status"], "found");
    assert!(v["forward_lin_width_excess"].as_f64().unwrap() > 0.01);
    assert_eq!(v["lp_one_shot_inside_recursive"], true);
}

#[test]
fn scenario_round_trips() {
    let dir = TempDir::new().unwrap();
    let path = scenario(dir.path(), r#","w":null,"seed":7"#);
    let s = Scenario::load(Path::new(&path)).unwrap();
    let again = Scenario::from_json(&s.to_json()).unwrap();
    assert_eq!(s, again);
}
