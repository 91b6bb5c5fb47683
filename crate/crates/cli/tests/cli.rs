use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwre-lab"))
        .args(args)
        .env_remove("RWRE_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_output_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for w in ["1", "4"] {
        let out = dir.path().join(format!("w{w}.jsonl"));
        let o = lab(&[
            "simulate", "--n", "50,200", "--a", "0.3", "--replicas", "8", "--seed", "11", "--workers", w,
            "--out", p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(String::from_utf8_lossy(&files[0]).lines().count(), 1 + 16);
}

#[test]
fn budgeted_run_resumes_to_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.jsonl");
    let part = dir.path().join("part.jsonl");
    let common = ["simulate", "--n", "100", "--replicas", "10", "--seed", "5", "--workers", "2"];
    assert_eq!(code(&lab(&[&common[..], &["--out", p(&full)]].concat())), 0);
    assert_eq!(code(&lab(&[&common[..], &["--out", p(&part), "--budget", "4"]].concat())), 0);
    assert!(!part.exists());
    let o = lab(&[&common[..], &["--out", p(&part), "--resume"]].concat());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("6 items computed, 4 reused"));
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&part).unwrap());
    let manifest = std::fs::read_to_string(dir.path().join("part.jsonl.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["record_count"], 10);
    assert_eq!(m["completed"][0]["end"], 10);
}

#[test]
fn verify_detects_a_corrupted_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    assert_eq!(code(&lab(&["simulate", "--n", "30", "--replicas", "3", "--out", p(&out)])), 0);
    assert_eq!(code(&lab(&["verify", "--records", p(&out)])), 0);

    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    rec["s"] = serde_json::json!(rec["s"].as_f64().unwrap() - 1.0);
    lines[1] = rec.to_string();
    std::fs::write(&out, lines.join("\n") + "\n").unwrap();
    let o = lab(&["verify", "--records", p(&out)]);
    assert_eq!(code(&o), 2);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["checks"][0]["violated"], 1);
}

#[test]
fn small_verification_suite_passes() {
    let o = lab(&[
        "verify", "--max-steps", "6", "--environments", "3", "--instances", "50", "--max-dx", "40", "--max-dy", "8",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&lab(&["verify", "--max-steps", "30"])), 1);
}

#[test]
fn fixed_k_records_analyze_against_a_normal_reference() {
    let dir = tempfile::tempdir().unwrap();
    let recs = dir.path().join("k1.jsonl");
    let reference = dir.path().join("normal.jsonl");
    let csv = dir.path().join("q.csv");
    assert_eq!(
        code(&lab(&["simulate", "--n", "500", "--k", "1", "--replicas", "400", "--functionals", "S", "--out", p(&recs)])),
        0
    );
    assert_eq!(code(&lab(&["gue", "--kind", "normal", "--samples", "2000", "--out", p(&reference)])), 0);
    let o = lab(&[
        "analyze", "--records", p(&recs), "--reference", p(&reference), "--statistic", "t1ii", "--bootstrap", "200",
        "--csv", p(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["pass"].is_null());
    let ks = summary["groups"][0]["ks"].as_f64().unwrap();
    assert!(ks > 0.0 && ks < 1.0);
    assert_eq!(summary["groups"][0]["count"], 400);
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() == 100);

    // A threshold nobody can meet is a check failure.
    let o = lab(&["analyze", "--records", p(&recs), "--reference", p(&reference), "--statistic", "t1ii", "--threshold", "0"]);
    assert_eq!(code(&o), 2);
    // Wrong exponent is a metadata mismatch.
    let o = lab(&["analyze", "--records", p(&recs), "--statistic", "t1ii", "--a", "0.25"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn landscape_and_couple_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("land.jsonl");
    let o = lab(&["landscape", "--n", "1000", "--a", "0.25", "--replicas", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 6);

    let o = lab(&["couple", "--env", "logpareto:3,1", "--n", "200", "--a", "0.25", "--replicas", "2", "--origins", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["rows"][0]["domination_violations"], 0);
}

#[test]
fn exit_codes_for_usage_and_runtime_errors() {
    assert_eq!(code(&lab(&["simulate", "--no-such-flag"])), 1);
    assert_eq!(code(&lab(&["simulate", "--env", "beta:-1,1"])), 1);
    assert_eq!(code(&lab(&["simulate", "--a", "1.5", "--n", "10"])), 1);
    assert_eq!(code(&lab(&["analyze", "--records", "/nonexistent/r.jsonl", "--statistic", "t1i"])), 3);
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&lab(&["analyze", "--records", p(&empty), "--statistic", "t1i"])), 3);
    assert_eq!(code(&lab(&["--help"])), 0);
}

#[test]
fn worker_count_defaults_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_rwre-lab"))
        .args(["simulate", "--n", "20", "--replicas", "2"])
        .env("RWRE_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let bad = Command::new(env!("CARGO_BIN_EXE_rwre-lab"))
        .args(["simulate", "--n", "20", "--replicas", "2"])
        .env("RWRE_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 1);
}
