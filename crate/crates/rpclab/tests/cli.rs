use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rpclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpclab"))
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn eval_dirac_at_zero_without_coupling() {
    let out = rpclab(&[
        "eval",
        "--measure",
        "0:1",
        "--beta",
        "0",
        "--h",
        "0.5",
        "--g",
        "linear",
    ]);
    let v = json(&out);
    let r = &v["results"][0];
    let want = std::f64::consts::LN_2 + 0.5f64.cosh().ln();
    assert!((f(&r["g_functional"]["value"]) - want).abs() < 1e-14);
    assert!((f(&r["parisi_functional"]) - 0.5f64.cosh().ln()).abs() < 1e-14);
    // every resolved option is echoed, defaults included
    for key in [
        "measure",
        "beta",
        "h",
        "g",
        "n-h",
        "n-y",
        "half-width",
        "format",
        "threads",
    ] {
        assert!(v["config"].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn at_line_at_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("at.csv");
    let out = rpclab(&["at-line", "--h", "0", "--csv", csv.to_str().unwrap()]);
    let v = json(&out);
    let r = &v["results"][0];
    assert_eq!(f(&r["h"]), 0.0);
    assert!((f(&r["beta_at"]) - 1.0).abs() < 1e-8);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("h,beta_at"));
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(row[0], 0.0);
    assert!((row[1] - 1.0).abs() < 1e-8);
}

#[test]
fn verify_overlap_suite_passes() {
    let out = rpclab(&["verify", "--suite", "overlap", "--seed", "7"]);
    let v = json(&out);
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 4);
    assert!(checks.iter().all(|c| c["passed"] == Value::Bool(true)));
}

#[test]
fn verify_failure_exits_one() {
    // a 16-node grid cannot resolve the derivatives
    let out = rpclab(&[
        "verify",
        "--suite",
        "derivatives",
        "--n-y",
        "16",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAILED"));
}

#[test]
fn configuration_errors_exit_two() {
    for args in [
        vec!["eval", "--measure", "0:1", "--bogus", "1"],
        vec!["eval", "--measure", "0.5:0.3"],
        vec!["eval"],
        vec!["eval", "--measure", "0:1", "--g", "cubic"],
        vec!["simulate", "--measure", "0.5:0.5,1:1"],
        vec!["sk-oracle", "--spins", "4"],
        vec!["minimize", "--k", "1"],
        vec!["verify", "--suite", "nothing", "--seed", "1"],
        vec!["at-line", "--h", "0", "--bracket", "2,1"],
        vec!["frobnicate"],
    ] {
        let out = rpclab(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn help_lists_every_flag() {
    let out = rpclab(&["simulate", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--config",
        "--output",
        "--format",
        "--threads",
        "--measure",
        "--beta",
        "--h",
        "--g",
        "--n-h",
        "--n-y",
        "--half-width",
        "--branching",
        "--samples",
        "--seed",
        "--levels",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# model\nmeasure = 0.3:0.5,1:1\nbeta = 2\nh = 0.1\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let v = json(&rpclab(&["eval", "--config", cfg, "--beta", "0.5"]));
    assert_eq!(f(&v["config"]["beta"]), 0.5);
    assert_eq!(f(&v["config"]["h"]), 0.1);
    assert_eq!(v["config"]["measure"], Value::from("0.3:0.5,1:1"));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "measure = 0:1\nbetta = 1\n").unwrap();
    let out = rpclab(&["eval", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> Vec<u8> {
    let path = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap().to_string();
    full.extend(["--output", &p]);
    let out = rpclab(&full);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::read(&path).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "eval",
            "--measure",
            "0.3:0.5,1:1",
            "--beta",
            "1.2",
            "--h",
            "0.2",
        ],
        vec![
            "simulate",
            "--measure",
            "0.3:0.5,1:1",
            "--branching",
            "20",
            "--samples",
            "200",
            "--seed",
            "4",
        ],
        vec!["derivatives", "--measure", "0.3:0.5,1:1", "--n-y", "512"],
        vec![
            "minimize", "--beta", "0.8", "--h", "0.3", "--starts", "2", "--seed", "5", "--n-y",
            "512",
        ],
        vec!["at-line", "--h", "0,0.5"],
        vec!["sk-oracle", "--spins", "6", "--draws", "20", "--seed", "2"],
        vec!["verify", "--suite", "bs", "--seed", "1"],
        vec!["at-line", "--h", "0,0.5", "--format", "csv"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let a = run_to(dir.path(), &format!("a{i}"), args);
        let b = run_to(dir.path(), &format!("a{i}"), args);
        assert_eq!(a, b, "{args:?}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let base = [
        "simulate",
        "--measure",
        "0.3:0.5,1:1",
        "--branching",
        "20",
        "--samples",
        "300",
        "--seed",
        "9",
    ];
    let mut one = base.to_vec();
    one.extend(["--threads", "1"]);
    let mut three = base.to_vec();
    three.extend(["--threads", "3"]);
    let a = json(&rpclab(&one));
    let b = json(&rpclab(&three));
    assert_eq!(a["results"], b["results"]);
    assert_eq!(a["checks"], b["checks"]);
}

#[test]
fn derivatives_report_fd_errors() {
    let v = json(&rpclab(&[
        "derivatives",
        "--measure",
        "0.2:0.3,0.55:0.7,1:1",
        "--beta",
        "1.2",
        "--h",
        "0.25",
    ]));
    let rows = v["results"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0]["q_derivative"].is_null());
    for r in rows {
        assert!(f(&r["fd_check_error"]) < 1e-5);
    }
    assert!(v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == Value::Bool(true)));
}

#[test]
fn floats_reload_exactly() {
    let v = json(&rpclab(&[
        "eval",
        "--measure",
        "0.3:0.5,1:1",
        "--beta",
        "1.1",
        "--h",
        "0.2",
    ]));
    let text = serde_json::to_string(&v["results"][0]["parisi_functional"]).unwrap();
    let mantissa = text.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17);
}
