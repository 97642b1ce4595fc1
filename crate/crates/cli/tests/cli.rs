use std::path::Path;
use std::process::{Command, Output};

fn pnest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnest")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

#[test]
fn chebyshev_parameter_is_non_recurrent() {
    let out = pnest(&["nest", "--param", "2", "--levels", "4"]);
    assert_eq!(code(&out), 4);
    let v = stdout_json(&out);
    assert_eq!(v["results"]["nest"]["terminated_by"], "non_recurrent");
    assert_eq!(v["results"]["nest"]["depth"], 0);
}

#[test]
fn superattracting_period_three_is_renormalizable() {
    let out = pnest(&["nest", "--param", "1.75", "--levels", "3"]);
    assert_eq!(code(&out), 5);
}

#[test]
fn out_of_range_parameter_is_a_usage_error() {
    for p in ["1.2", "2.5", "one"] {
        let out = pnest(&["nest", "--param", p]);
        assert_eq!(code(&out), 2, "param {p}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_output_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("absent").join("run.json");
    let out = pnest(&["nest", "--param", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent"));
}

#[test]
fn malformed_target_is_a_usage_error() {
    let out = pnest(&["search", "--target", "{\"kind\": \"bogus\""]);
    assert_eq!(code(&out), 2);
    let out = pnest(&["search", "--target", "no-such-family"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_target_file_is_an_io_error() {
    let out = pnest(&["search", "--target", "/nonexistent/target.json"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn inadmissible_target_is_not_realized() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("target.json");
    let target = r#"{"kind":"explicit_records","value":[{"level":1,"ordering":[1,0],"itineraries":[[]],"depths":[0,0]}]}"#;
    std::fs::write(&path, target).unwrap();
    let out = pnest(&["search", "--target", path.to_str().unwrap()]);
    assert_eq!(code(&out), 7, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_two_point_grid() {
    let out = pnest(&["sweep", "--range", "1.99,2.0", "--grid", "2", "--levels", "4"]);
    assert_eq!(code(&out), 0);
    let rows = stdout_json(&out)["results"]["sweep"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["a"], "1.99");
    assert_eq!(rows[1]["a"], "2");
    assert_eq!(rows[1]["termination"], "non_recurrent");

    let csv = pnest(&["sweep", "--range", "1.99,2.0", "--grid", "2", "--levels", "4", "--format", "csv"]);
    assert_eq!(code(&csv), 0);
    assert_eq!(String::from_utf8_lossy(&csv.stdout).trim().lines().count(), 3);
}

#[test]
fn empty_or_malformed_range_is_a_usage_error() {
    for r in ["1.9,1.9", "1.95,1.9", "1.9", "1.4,1.9"] {
        let out = pnest(&["sweep", "--range", r]);
        assert_eq!(code(&out), 2, "range {r}");
    }
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let args = ["sweep", "--range", "1.7,1.8", "--grid", "5", "--levels", "4"];
    let one = Command::new(env!("CARGO_BIN_EXE_pnest"))
        .args(args)
        .env("PNEST_WORKERS", "1")
        .output()
        .unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_pnest"))
        .args(args)
        .env("PNEST_WORKERS", "4")
        .output()
        .unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn analyze_reproduces_a_stored_record() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("run.json");
    let out = pnest(&["nest", "--param", "1.8", "--levels", "5", "--out", rec.to_str().unwrap()]);
    assert!(out.stdout.is_empty());
    assert!(Path::new(&rec).exists());

    let out = pnest(&["analyze", rec.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["reproduced"], true);

    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rec).unwrap()).unwrap();
    v["results"]["nest"]["depth"] = serde_json::json!(999);
    std::fs::write(&rec, serde_json::to_string(&v).unwrap()).unwrap();
    let out = pnest(&["analyze", rec.to_str().unwrap()]);
    assert_eq!(code(&out), 9);
}

#[test]
fn analyze_rejects_foreign_schema() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("run.json");
    std::fs::write(&rec, r#"{"schema_version": 99}"#).unwrap();
    assert_eq!(code(&pnest(&["analyze", rec.to_str().unwrap()])), 2);
}
