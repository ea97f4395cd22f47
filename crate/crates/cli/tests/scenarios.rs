//! The scenario files shipped in `scenarios/` stay runnable.

use flowsens_cli::run;
use std::path::PathBuf;

fn scenario(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    root.to_string_lossy().into_owned()
}

fn run_scenario(kind: &str, name: &str, out: &std::path::Path) -> i32 {
    run([
        "flowsens".to_string(),
        kind.to_string(),
        "--config".to_string(),
        scenario(name),
        "--out".to_string(),
        out.to_string_lossy().into_owned(),
    ])
}

#[test]
fn shipped_scenarios_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = |n: &str| dir.path().join(n);

    assert_eq!(run_scenario("flow", "flow_logistic.json", &out("a.csv")), 0);
    assert_eq!(run_scenario("hit", "hit_rotation.json", &out("b.csv")), 0);
    assert_eq!(
        run_scenario("verify-hjb", "verify_wedge.json", &out("c.csv")),
        0
    );
    assert_eq!(
        run_scenario("verify-hjb", "verify_smooth_fit.json", &out("d.csv")),
        0
    );
    assert_eq!(
        run_scenario("sweep", "sweep_random_rotation.json", &out("e.csv")),
        0
    );
    // The degenerate start is reported through exit code 3 by design.
    assert_eq!(run_scenario("hit", "hit_remark.json", &out("f.csv")), 3);
}
