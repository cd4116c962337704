use std::path::Path;
use std::process::{Command, Output};

fn phirl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phirl"))
        .args(args)
        .env_remove("PHIRL_THREADS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn synth(dir: &Path, profile: &str) -> Output {
    let p = dir.join("profile.json");
    std::fs::write(&p, profile).unwrap();
    let out = dir.join("out");
    phirl(&["synth", "--profile", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"])
}

const ONE_RUN: &str = r#"{"n_checkpoints": 4, "episodes_per_checkpoint": 2, "T": 150, "n_units": 4,
 "coupling_curve": {"kind": "linear", "from": 0.0, "to": 0.8},
 "reward_curve": {"kind": "linear", "from": 0, "to": 10}}"#;

#[test]
fn synth_then_emerge_gives_one_value_per_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(dir.path(), ONE_RUN);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let bundle = dir.path().join("out");
    let v = phirl(&["validate", bundle.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(json(&v)["results"]["valid"], true);

    let e = phirl(&["emerge", bundle.to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(0), "{}", String::from_utf8_lossy(&e.stderr));
    let report = json(&e);
    assert_eq!(report["command"], "emerge");
    let cps = report["results"]["checkpoints"].as_array().unwrap();
    assert_eq!(cps.len(), 4);
    assert!(cps.iter().all(|c| c["phi_r"].is_number()));
    assert!(report["tool_version"].is_string());
}

#[test]
fn oversized_window_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), ONE_RUN);
    let bundle = dir.path().join("out");
    let e = phirl(&["emerge", bundle.to_str().unwrap(), "--window", "500"]);
    assert_eq!(e.status.code(), Some(1));
    let err = String::from_utf8_lossy(&e.stderr);
    assert!(err.contains("fewer than the window of 500"), "{err}");
}

#[test]
fn corrupted_bundle_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), ONE_RUN);
    let bundle = dir.path().join("out");
    let manifest = bundle.join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap().replacen("\"T\": 150", "\"T\": 151", 1);
    std::fs::write(&manifest, text).unwrap();
    let v = phirl(&["validate", bundle.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert_eq!(json(&v)["results"]["valid"], false);
    let e = phirl(&["metrics", bundle.to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(1));
}

#[test]
fn missing_profile_and_bad_arguments() {
    assert_eq!(phirl(&["synth", "--profile", "/nonexistent.json", "--out", "/tmp/x"]).status.code(), Some(1));
    assert_eq!(phirl(&["emerge"]).status.code(), Some(1));
    assert_eq!(phirl(&["--help"]).status.code(), Some(0));
}

#[test]
fn csv_tables_are_written() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), ONE_RUN);
    let bundle = dir.path().join("out");
    let csv = dir.path().join("csv");
    let m = phirl(&["metrics", bundle.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(m.status.code(), Some(0), "{}", String::from_utf8_lossy(&m.stderr));
    let table = std::fs::read_to_string(csv.join("metrics.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert!(header.contains("entropy") && header.contains("magnitude"), "{header}");
    assert_eq!(table.lines().count(), 1 + 4);
}
