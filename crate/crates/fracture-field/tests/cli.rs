//! End-to-end checks of the binary: argument handling, artifact layout,
//! and the diagnostics promised for malformed inputs.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracture-field"))
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn run_from_scenario_file_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("tiny.json");
    std::fs::write(
        &scenario,
        r#"{
            "name": "tiny",
            "mesh_h": 4,
            "tau": 0.25,
            "t_end": 0.5,
            "boundary": [
                {"side": "left", "interval": [0.0, 0.45], "rate": 1.0},
                {"side": "left", "interval": [0.55, 1.0], "rate": -1.0}
            ],
            "output": {"snapshot_every": 1, "early_stop": true}
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = bin()
        .arg("run")
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(result.status.success(), "{}", stderr_of(&result));
    for artifact in ["trace.csv", "manifest.json", "snap_000000.vtk", "snap_000002.vtk"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    assert!(!out.join(".lock").exists(), "lock not released");

    // The recorded run replays cleanly through the inequality checker.
    let check = bin().arg("check-inequality").arg(&out).output().unwrap();
    assert!(check.status.success(), "{}", stderr_of(&check));
    let text = String::from_utf8_lossy(&check.stdout).into_owned();
    assert!(text.contains("energy inequality holds"), "{text}");
}

#[test]
fn second_run_into_same_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".lock"), "pid 0").unwrap();
    let result = bin()
        .args(["run", "--builtin", "example1", "--h", "4", "--tau", "0.3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(!result.status.success());
    let err = stderr_of(&result);
    assert!(err.contains("lock") || err.contains("stale"), "{err}");
}

#[test]
fn overlapping_boundary_clauses_name_the_vertex() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("overlap.json");
    std::fs::write(
        &scenario,
        r#"{
            "mesh_h": 4,
            "tau": 0.5,
            "t_end": 0.5,
            "boundary": [
                {"side": "left", "interval": [0.0, 0.6], "rate": 1.0},
                {"side": "left", "interval": [0.4, 1.0], "rate": -1.0}
            ]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = bin()
        .arg("run")
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!result.status.success());
    let err = stderr_of(&result);
    assert!(err.contains("receives two values"), "{err}");
    assert!(err.contains("(0, 0.5)"), "{err}");
}

#[test]
fn unknown_scenario_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("typo.json");
    std::fs::write(
        &scenario,
        r#"{
            "mesh_h": 4,
            "tau": 0.5,
            "t_end": 0.5,
            "boundry": [],
            "boundary": [{"side": "left", "interval": [0.0, 1.0], "rate": 1.0}]
        }"#,
    )
    .unwrap();
    let result = bin()
        .arg("run")
        .arg(&scenario)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!result.status.success());
    assert!(stderr_of(&result).contains("boundry"), "{}", stderr_of(&result));
}

#[test]
fn unknown_builtin_and_suite_fail_cleanly() {
    let result = bin()
        .args(["run", "--builtin", "example9"])
        .output()
        .unwrap();
    assert!(!result.status.success());
    assert!(stderr_of(&result).contains("example9"));

    let result = bin().args(["verify", "--suite", "bogus"]).output().unwrap();
    assert!(!result.status.success());
    assert!(stderr_of(&result).contains("unknown suite"));
}

#[test]
fn check_inequality_requires_per_step_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sparse");
    let result = bin()
        .args(["run", "--builtin", "example1", "--h", "4", "--tau", "0.3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(result.status.success(), "{}", stderr_of(&result));
    let check = bin().arg("check-inequality").arg(&out).output().unwrap();
    assert!(!check.status.success());
    assert!(
        stderr_of(&check).contains("--snapshots 1"),
        "{}",
        stderr_of(&check)
    );
}

#[test]
fn missing_run_directory_is_reported() {
    let check = bin()
        .args(["check-inequality", "/nonexistent/run-dir"])
        .output()
        .unwrap();
    assert!(!check.status.success());
    assert!(stderr_of(&check).contains("manifest.json"));
}
