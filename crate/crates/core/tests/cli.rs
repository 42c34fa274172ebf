use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn nlap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlap")).args(args).output().unwrap()
}

fn path(name: &str) -> String {
    data(name).display().to_string()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn tsv_summary(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("# {key}\t")))
        .and_then(|rest| rest.split('\t').next())
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn solve_triangle_lands_on_the_optimum() {
    let out = nlap(&["solve", &path("triangle.txt"), "--epsilon", "0.1", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    let x = floats(&report["x"]);
    let mean = x.iter().sum::<f64>() / 3.0;
    for (xi, expected) in x.iter().zip([1.0 / 3.0, -1.0 / 3.0, 0.0]) {
        assert!((xi - mean - expected).abs() < 1e-12);
    }
    let keys: Vec<&str> = report.as_object().unwrap().keys().map(String::as_str).collect();
    for key in ["x", "g", "iterations", "S_budget", "tau", "st", "energy_trace", "tgap_trace", "seed", "wall_time_s", "final_tgap"] {
        assert!(keys.contains(&key), "missing {key}");
    }
    assert!(report["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn unbalanced_demand_is_a_validation_error() {
    let out = nlap(&["solve", &path("triangle.txt"), &path("unbalanced.b")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sum to zero"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn malformed_edge_line_is_a_parse_error() {
    let out = nlap(&["solve", &path("malformed.txt")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert_eq!(nlap(&["solve", &path("missing.txt")]).status.code(), Some(3));
    assert_eq!(nlap(&["solve"]).status.code(), Some(3));
    assert_eq!(nlap(&["solve", &path("triangle.txt"), "--tree", "bogus"]).status.code(), Some(3));
}

#[test]
fn tree_reports_stretch_and_condition_number() {
    let out = nlap(&["tree", &path("triangle.txt")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut stretches: Vec<f64> = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').nth(5).unwrap().parse().unwrap())
        .collect();
    stretches.sort_by(f64::total_cmp);
    assert_eq!(stretches, vec![1.0, 1.0, 2.0]);
    assert_eq!(tsv_summary(&text, "st"), 4.0);
    assert_eq!(tsv_summary(&text, "tau"), 3.0);
    assert!(text.contains("# st+m-2n+2\t3\tok"));

    let text = String::from_utf8(nlap(&["tree", &path("square.txt")]).stdout).unwrap();
    assert_eq!(tsv_summary(&text, "st"), 6.0);
    assert_eq!(tsv_summary(&text, "tau"), 4.0);

    let text = String::from_utf8(nlap(&["tree", &path("path.txt"), "--tree", "mst"]).stdout).unwrap();
    assert_eq!(tsv_summary(&text, "st"), 2.0);
    assert!(text.contains("# tau\t0\n"));
}

#[test]
fn oracle_commands() {
    let out = nlap(&["oracle", &path("triangle.txt")]);
    assert_eq!(out.status.code(), Some(0));
    let sol = stdout_json(&out);
    assert!((sol["phi"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-14);

    let sol = stdout_json(&nlap(&["oracle", &path("triangle.txt"), &path("zero3.b")]));
    assert_eq!(sol["phi"].as_f64().unwrap(), 0.0);

    assert_eq!(nlap(&["oracle", &path("split.txt")]).status.code(), Some(2));
}

#[test]
fn validate_round_trip() {
    let report = std::env::temp_dir().join(format!("nlap-report-{}.json", std::process::id()));
    let out = nlap(&["solve", &path("mixed.txt"), "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0));
    std::fs::write(&report, &out.stdout).unwrap();
    let check = nlap(&["validate", &path("mixed.txt"), "--report", report.to_str().unwrap()]);
    assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stdout));
    let parsed = stdout_json(&check);
    let (tgap, reported) = (parsed["tgap"].as_f64().unwrap(), parsed["report_tgap"].as_f64().unwrap());
    assert!((tgap - reported).abs() <= 1e-9 * reported.abs().max(f64::MIN_POSITIVE));

    // A tampered flow must be caught.
    let mut tampered = stdout_json(&out);
    tampered["g"][0] = Value::from(tampered["g"][0].as_f64().unwrap() + 0.25);
    std::fs::write(&report, tampered.to_string()).unwrap();
    let check = nlap(&["validate", &path("mixed.txt"), "--report", report.to_str().unwrap()]);
    assert_eq!(check.status.code(), Some(2));
    let _ = std::fs::remove_file(report);
}

#[test]
fn identical_runs_are_byte_identical() {
    let args = ["solve", &path("mixed.txt"), "--seed", "5", "--no-wall-time"];
    let first = nlap(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, nlap(&args).stdout);
    assert_ne!(first.stdout, nlap(&["solve", &path("mixed.txt"), "--seed", "6", "--no-wall-time"]).stdout);
}

fn check_golden(instance: &str, golden: &str) {
    let out = nlap(&["solve", &path(instance), "--epsilon", "0.1", "--seed", "7", "--no-wall-time"]);
    assert_eq!(out.status.code(), Some(0));
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(golden);
    if std::env::var_os("NLAP_BLESS").is_some() {
        std::fs::write(&file, &out.stdout).unwrap();
    }
    let expected = std::fs::read(&file).unwrap();
    assert!(expected == out.stdout, "{golden} differs; rerun with NLAP_BLESS=1 if the change is intended");
}

#[test]
fn golden_triangle() {
    check_golden("triangle.txt", "triangle.json");
}

#[test]
fn golden_square() {
    check_golden("square.txt", "square.json");
}
