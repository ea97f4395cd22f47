//! CLI acceptance: deterministic sweeps, exit codes, and schema rejection.

use flowsens_cli::run;
use std::fs;
use std::path::Path;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn args(parts: &[&str]) -> Vec<String> {
    std::iter::once("flowsens")
        .chain(parts.iter().copied())
        .map(String::from)
        .collect()
}

/// Repeated sweep runs produce byte-identical CSV.
#[test]
fn criterion_13_sweep_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "sweep.json",
        r#"{
            "kind": "sweep",
            "scenario": {
                "kind": "flow",
                "system": { "builtin": { "name": "rotation2d" } },
                "initial_conditions": {
                    "random": { "count": 40, "min": [-0.9, -0.9], "max": [0.9, 0.9], "seed": 11 }
                },
                "t0": 0.0,
                "t": 1.5
            }
        }"#,
    );
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    let code_a = run(args(&["sweep", "--config", &config, "--out", out_a.to_str().unwrap()]));
    let code_b = run(args(&["sweep", "--config", &config, "--out", out_b.to_str().unwrap()]));
    assert_eq!((code_a, code_b), (0, 0));
    let bytes_a = fs::read(&out_a).unwrap();
    let bytes_b = fs::read(&out_b).unwrap();
    let pass = bytes_a == bytes_b && !bytes_a.is_empty();
    println!(
        "criterion 13 sweep determinism: {} ({} bytes, identical = {})",
        if pass { "PASS" } else { "FAIL" },
        bytes_a.len(),
        bytes_a == bytes_b
    );
    assert!(pass);
}

/// The degenerate start reports a non-transversal hit and exits 3.
#[test]
fn remark_scenario_exits_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "remark.json",
        r#"{
            "kind": "hit",
            "system": { "builtin": { "name": "remark_counterexample" } },
            "initial_conditions": { "list": [[-1.0, 0.0]] },
            "t0": 0.0,
            "t_max": 3.0,
            "strict_graze": true
        }"#,
    );
    let out = dir.path().join("remark.csv");
    let code = run(args(&["hit", "--config", &config, "--out", out.to_str().unwrap()]));
    assert_eq!(code, 3);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.contains("non-transversal hit"), "csv: {csv}");
}

/// Flow residual columns stay under the asserted threshold.
#[test]
fn flow_scenario_passes_residual_assert() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "logistic.json",
        r#"{
            "kind": "flow",
            "system": { "builtin": { "name": "logistic", "params": [1.0] } },
            "initial_conditions": { "grid": { "min": [0.1], "max": [0.9], "counts": [9] } },
            "t0": 0.0,
            "t": 2.0
        }"#,
    );
    let out = dir.path().join("flow.csv");
    let code = run(args(&[
        "flow",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--assert",
        "1e-7",
    ]));
    assert_eq!(code, 0);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 10); // header + 9 samples
    assert!(csv.starts_with("index,x0_1,t0,t,x_1,m_11,ddt0_1,r_prop,r_cor,error"));
}

/// The wedge verification passes the 1e-6 residual gate.
#[test]
fn verify_scenario_passes_assert_gate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "wedge.json",
        r#"{
            "kind": "verify-hjb",
            "problem": { "builtin": { "name": "wedge_problem" } },
            "samples": { "grid": { "x": { "min": -0.8, "max": 1.6, "count": 6 },
                                    "t": { "min": 0.07, "max": 1.43, "count": 6 } } }
        }"#,
    );
    let out = dir.path().join("wedge_report.csv");
    let code = run(args(&[
        "verify-hjb",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--assert",
        "1e-6",
        "--json",
    ]));
    assert_eq!(code, 0);
    assert!(out.with_extension("json").exists());
}

/// Assert failures exit 4.
#[test]
fn loose_tolerances_trip_the_assert_gate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "coarse.json",
        r#"{
            "kind": "flow",
            "system": { "builtin": { "name": "logistic", "params": [1.0] } },
            "initial_conditions": { "single": [0.3] },
            "t0": 0.0,
            "t": 2.0,
            "tolerances": { "rtol": 1e-4, "atol": 1e-6 }
        }"#,
    );
    let code = run(args(&["flow", "--config", &config, "--assert", "1e-12"]));
    assert_eq!(code, 4);
}

/// Schema violations exit 2 without side effects.
#[test]
fn schema_rejection_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    // Missing required field `t`.
    let missing = write(
        dir.path(),
        "missing.json",
        r#"{
            "kind": "flow",
            "system": { "builtin": { "name": "logistic", "params": [1.0] } },
            "initial_conditions": { "single": [0.3] },
            "t0": 0.0
        }"#,
    );
    let out = dir.path().join("never.csv");
    let code = run(args(&["flow", "--config", &missing, "--out", out.to_str().unwrap()]));
    assert_eq!(code, 2);
    assert!(!out.exists(), "schema failure must not write output");

    // Unknown keys are rejected.
    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{
            "kind": "flow",
            "system": { "builtin": { "name": "logistic", "params": [1.0] } },
            "initial_conditions": { "single": [0.3] },
            "t0": 0.0,
            "t": 1.0,
            "surprise": true
        }"#,
    );
    assert_eq!(run(args(&["flow", "--config", &unknown])), 2);

    // Kind/subcommand mismatch.
    assert_eq!(run(args(&["hit", "--config", &unknown])), 2);
}

/// `--seed` overrides the scenario's random seed.
#[test]
fn seed_flag_changes_random_samples() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "random.json",
        r#"{
            "kind": "sweep",
            "scenario": {
                "kind": "flow",
                "system": { "builtin": { "name": "linear1d", "params": [1.0] } },
                "initial_conditions": { "random": { "count": 5, "min": [0.1], "max": [1.0], "seed": 1 } },
                "t0": 0.0,
                "t": 1.0
            }
        }"#,
    );
    let out_1 = dir.path().join("s1.csv");
    let out_2 = dir.path().join("s2.csv");
    let out_1b = dir.path().join("s1b.csv");
    assert_eq!(
        run(args(&["sweep", "--config", &config, "--out", out_1.to_str().unwrap(), "--seed", "7"])),
        0
    );
    assert_eq!(
        run(args(&["sweep", "--config", &config, "--out", out_2.to_str().unwrap(), "--seed", "8"])),
        0
    );
    assert_eq!(
        run(args(&["sweep", "--config", &config, "--out", out_1b.to_str().unwrap(), "--seed", "7"])),
        0
    );
    let a = fs::read(&out_1).unwrap();
    let b = fs::read(&out_2).unwrap();
    let c = fs::read(&out_1b).unwrap();
    assert_ne!(a, b, "different seeds must change the samples");
    assert_eq!(a, c, "same seed must reproduce the samples");
}
