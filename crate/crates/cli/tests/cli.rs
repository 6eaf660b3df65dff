use std::process::{Command, Output};

fn gradsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradsched")).args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).expect("stderr is one JSON object")
}

#[test]
fn out_of_range_threshold_is_a_config_error() {
    let out = gradsched(&["--tau-star", "1.5", "--out", "unused"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "invalid_config");
    let diags = err["diagnostics"].as_array().unwrap();
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0]["field"], "tau_star");
}

#[test]
fn bad_config_file_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "# comment\nK = 8\nbogus = 3\n").unwrap();
    let out = gradsched(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["diagnostics"][0]["line"], 3);
}

#[test]
fn unknown_experiment_lists_the_available_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradsched(&["--experiment", "nope", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "unknown_experiment");
    assert!(err["available"].as_array().unwrap().iter().any(|v| v == "staleness_audit"));
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradsched(&["--steps", "120", "--R", "8", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(csv.starts_with('#'));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 121);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "run");
    assert_eq!(summary["config"]["seed"], 3);
    assert_eq!(summary["results"]["audit"]["conflict_violations"], 0);

    let again = tempfile::tempdir().unwrap();
    let out2 = gradsched(&["--steps", "120", "--R", "8", "--seed", "3", "--out", again.path().to_str().unwrap()]);
    assert!(out2.status.success());
    assert_eq!(csv, std::fs::read_to_string(again.path().join("run.csv")).unwrap());
}

#[test]
fn printed_config_round_trips() {
    let first = gradsched(&["--K", "6", "--beta", "0.8", "--sketch-mode", "fd", "--print-config"]);
    assert!(first.status.success());
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("sketch_mode"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eff.cfg");
    std::fs::write(&path, &text).unwrap();
    let second = gradsched(&["--config", path.to_str().unwrap(), "--print-config"]);
    assert!(second.status.success());
    assert_eq!(text, String::from_utf8(second.stdout).unwrap());
}
