use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/three_body.json")
}

fn fluidchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluidchain")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn short_run(dir: &Path, integrator: &str) -> serde_json::Value {
    let out = fluidchain(&[
        "run",
        scenario().to_str().unwrap(),
        "--integrator",
        integrator,
        "--duration",
        "0.5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_str(&stdout(&out)).unwrap()
}

#[test]
fn run_writes_trajectory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let summary = short_run(dir.path(), "lgvi");
    assert_eq!(summary["steps"], 500);
    assert_eq!(summary["records"], 51);
    assert_eq!(summary["max_abs_delta_px"], 0.0);
    assert!(dir.path().join("trajectory.csv").exists());
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, summary);
}

#[test]
fn compare_reports_agreement_of_two_integrators() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    short_run(a.path(), "lgvi");
    short_run(b.path(), "rk45");
    let diff = a.path().join("diff.csv");
    let out = fluidchain(&[
        "compare",
        a.path().join("trajectory.csv").to_str().unwrap(),
        b.path().join("trajectory.csv").to_str().unwrap(),
        "--threshold",
        "0.1",
        "--diff",
        diff.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["samples"], 51);
    assert!(report["divergence_time"].is_null());
    assert!(report["max_relative"].as_f64().unwrap() < 0.1);
    assert_eq!(std::fs::read_to_string(diff).unwrap().lines().count(), 52);
}

#[test]
fn inertia_prints_tables() {
    let out = fluidchain(&["inertia", scenario().to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    for needle in ["1.0659", "2.1696", "1.6641", "25.3276", "0.6551", "2.9210"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
    let out = fluidchain(&["inertia", "--json", scenario().to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["bodies"].as_array().unwrap().len(), 3);
}

#[test]
fn invalid_scenario_is_reported_with_its_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = fluidchain(&["run", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error[ParseError]"), "{}", stderr(&out));

    let out = fluidchain(&[
        "run",
        scenario().to_str().unwrap(),
        "--h=-1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error[ValidationError]") && err.contains("integrator.h"), "{err}");
}

#[test]
fn missing_joint_vector_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(scenario()).unwrap()).unwrap();
    doc["joints"][0].as_object_mut().unwrap().remove("di0");
    let path = dir.path().join("s.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = fluidchain(&["inertia", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error[ValidationError]") && err.contains("joints[0].di0"), "{err}");
}
