mod common;

use std::fs;

use common::{api_report, fairscope, schema_errors, stderr, SessionPlan};
use serde_json::Value;

fn synth(dir: &std::path::Path, rows: usize) -> std::path::PathBuf {
    let path = dir.join("loans.csv");
    let rows = rows.to_string();
    let out = fairscope(&["synth", "--seed", "7", "--rows", &rows, "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    path
}

#[test]
fn report_writes_three_files_matching_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 300);
    let out_dir = dir.path().join("out");
    let out = fairscope(&[
        "report",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "result",
        "--positive",
        "accepted",
        "--sensitive",
        "citizenship,gender",
        "--privileged",
        "gender=M",
        "--metrics",
        "SPD,EqOppDiff,Theil",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let text = fs::read_to_string(out_dir.join("report.json")).unwrap();
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(schema_errors(&report), Vec::<String>::new());
    assert_eq!(report["dataset"]["rows"], 300);
    assert!(report["model"].is_object());
    assert!(fs::read_to_string(out_dir.join("report.txt")).unwrap().contains("Causal graph"));
    let graph: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("graph.json")).unwrap()).unwrap();
    assert_eq!(graph["edges"], report["graph"]["edges"]);

    let csv = fs::read_to_string(&data).unwrap();
    let api = api_report(
        &csv,
        &SessionPlan {
            target: "result",
            positive: "accepted",
            sensitive: &[("citizenship", None), ("gender", Some(&["M"]))],
            metrics: &["SPD", "EqOppDiff", "Theil"],
            seed: 0,
        },
        &dir.path().join("api"),
    )
    .unwrap();
    assert_eq!(api, text);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = fairscope(&["report", "--data", "x.csv", "--positive", "a", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    assert_eq!(fairscope(&["--help"]).status.code(), Some(0));
}

#[test]
fn user_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 60);
    let out_dir = dir.path().join("out");
    let run = |extra: &[&str]| {
        let mut args = vec!["report", "--data", data.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        fairscope(&args)
    };

    let out = run(&["--target", "outcome", "--positive", "accepted"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("outcome") && msg.contains("result"), "{msg}");

    let out = run(&["--target", "result", "--positive", "maybe"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));

    let out = run(&["--target", "result", "--positive", "accepted", "--metrics", "Accuracy"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));

    let out = fairscope(&[
        "report", "--data", "/nonexistent/file.csv", "--target", "result", "--positive", "accepted",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(!out_dir.exists());
}

#[test]
fn unwritable_output_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 60);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = fairscope(&[
        "report",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "result",
        "--positive",
        "accepted",
        "--no-model",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn graph_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 200);
    let args = ["graph", "--data", data.to_str().unwrap(), "--omega", "0.25"];
    let a = fairscope(&args);
    let b = fairscope(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let g: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(g["meta"]["omega"], 0.25);
    assert!(g["edges"].as_array().unwrap().iter().all(|e| e["strength"].as_f64().unwrap().abs() >= 0.25));
}
