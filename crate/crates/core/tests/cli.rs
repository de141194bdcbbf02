use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ldenet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldenet")).args(args).current_dir(cwd).output().unwrap()
}

fn logistic_csv(dir: &Path) {
    let mut x: f64 = 0.2;
    let mut body = String::from("date,close\n");
    for i in 0..800 {
        body.push_str(&format!("{i},{x}\n"));
        x = 4.0 * x * (1.0 - x);
    }
    fs::write(dir.join("data.csv"), body).unwrap();
}

#[test]
fn analyze_reports_a_chaotic_map() {
    let dir = tempfile::tempdir().unwrap();
    logistic_csv(dir.path());
    let out = ldenet(
        &["analyze", "--input", "data.csv", "--timestamp-column", "date", "--m-max", "6", "--output", "a.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(v["n"], 800);
    assert_eq!(v["chaos"]["chaotic"], true);
    assert!(v["chaos"]["lyapunov"]["lambda"].as_f64().unwrap() > 0.3);
}

#[test]
fn convergence_writes_curve_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = ldenet(
        &[
            "convergence", "--alpha", "1.7", "--paths", "100", "--dt-from", "2", "--dt-to", "5", "--csv", "c.csv",
            "--json", "c.json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert!(v["slope"].as_f64().unwrap() > 0.0);
    assert!(v["pass"].is_boolean());
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "close\n1\nx\n").unwrap();
    let out = ldenet(&["analyze", "--input", "bad.csv"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));

    fs::write(dir.path().join("cfg.json"), r#"{"integrator": {"alpha": 2.5}}"#).unwrap();
    let out = ldenet(&["train", "--config", "cfg.json", "--output", "run"], dir.path());
    assert!(!out.status.success());

    let out = ldenet(&["sweep-alpha", "--alphas", "1.5,2.0"], dir.path());
    assert!(!out.status.success());
}
