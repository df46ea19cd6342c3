use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn semgauss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semgauss"))
        .args(args)
        .current_dir(dir)
        .env_remove("CI")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semgauss(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn gen_scene_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-scene", "--seed", "7", "--out", "a.json"]);
    ok(dir.path(), &["gen-scene", "--seed", "7", "--out", "b.json"]);
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn empty_room_spec_has_six_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), r#"{"room": [4.0, 4.0, 2.5], "objects": []}"#).unwrap();
    let stdout = ok(dir.path(), &["gen-scene", "--spec", "spec.json", "--out", "s.json"]);
    assert!(stdout.contains("6 surfaces"), "{stdout}");
}

#[test]
fn invalid_box_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"room": [4.0, 4.0, 2.5], "objects": [{"class": "bed", "min": [1, 1, 0], "max": [0.5, 2, 1]}]}"#,
    )
    .unwrap();
    let out = semgauss(dir.path(), &["gen-scene", "--spec", "spec.json", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("object #0"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let defaults = ok(dir.path(), &["print-config"]);
    std::fs::write(dir.path().join("ok.toml"), &defaults).unwrap();
    assert_eq!(ok(dir.path(), &["print-config", "--config", "ok.toml"]), defaults);

    std::fs::write(dir.path().join("bad.toml"), "[refinement]\nbogus = 1\n").unwrap();
    let out = semgauss(dir.path(), &["print-config", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    std::fs::write(dir.path().join("neg.toml"), "[refinement]\ntau_unc = 1.5\n").unwrap();
    let out = semgauss(dir.path(), &["print-config", "--config", "neg.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ci_mode_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-scene", "--seed", "1", "--out", "s.json"]);
    ok(dir.path(), &["gen-trajectory", "--scene", "s.json", "--frames", "1", "--out", "t.json"]);
    let out = Command::new(env!("CARGO_BIN_EXE_semgauss"))
        .args(["run-embodied", "--scene", "s.json", "--trajectory", "t.json"])
        .current_dir(dir.path())
        .env("CI", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_identical_and_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-scene", "--seed", "3", "--out", "s.json"]);
    ok(d, &["gen-trajectory", "--scene", "s.json", "--frames", "1", "--out", "t.json"]);
    ok(
        d,
        &[
            "run-embodied", "--scene", "s.json", "--trajectory", "t.json", "--seed", "1",
            "--grid-out", "pred.bin", "--gt-out", "gt.bin", "--export-ply", "p.ply",
        ],
    );
    ok(
        d,
        &[
            "run-local", "--scene", "s.json", "--trajectory", "t.json", "--seed", "1",
            "--iterations", "1", "--gt-out", "local.bin",
        ],
    );
    let stdout = ok(d, &["eval", "--pred", "gt.bin", "--gt", "gt.bin", "--report", "e.json"]);
    assert!(stdout.contains("IoU 1.000000"), "{stdout}");
    assert_eq!(json(&d.join("e.json"))["iou"], 1.0);
    ok(d, &["eval", "--pred", "pred.bin", "--gt", "gt.bin"]);
    let out = semgauss(d, &["eval", "--pred", "pred.bin", "--gt", "local.bin"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dims"));
    let ply = std::fs::read_to_string(d.join("p.ply")).unwrap();
    assert!(ply.starts_with("ply\n"));
}

#[test]
fn sus_skips_where_fixed_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-scene", "--seed", "5", "--out", "s.json"]);
    ok(d, &["gen-trajectory", "--scene", "s.json", "--frames", "8", "--out", "t.json"]);
    let mut skipped = Vec::new();
    for mode in ["fixed", "sus"] {
        let report = format!("{mode}.json");
        ok(
            d,
            &[
                "run-embodied", "--scene", "s.json", "--trajectory", "t.json", "--seed", "2",
                "--mode", mode, "--report", &report,
            ],
        );
        let r = json(&d.join(&report));
        assert_eq!(r["mode"], mode);
        assert_eq!(r["frames"].as_array().unwrap().len(), 8);
        assert!(r.get("wall_time_s").is_none());
        skipped.push(r["eval"]["totals"]["skipped"].as_u64().unwrap());
    }
    assert_eq!(skipped[0], 0);
    assert!(skipped[1] > 0);
}

#[test]
fn timing_flag_adds_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-scene", "--seed", "5", "--out", "s.json"]);
    ok(d, &["gen-trajectory", "--scene", "s.json", "--frames", "1", "--out", "t.json"]);
    ok(
        d,
        &[
            "run-embodied", "--scene", "s.json", "--trajectory", "t.json", "--seed", "2",
            "--timing", "--report", "r.json",
        ],
    );
    assert!(json(&d.join("r.json"))["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn missing_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = semgauss(
        dir.path(),
        &["run-embodied", "--scene", "nope.json", "--trajectory", "t.json", "--seed", "1"],
    );
    assert_eq!(out.status.code(), Some(3));
}
