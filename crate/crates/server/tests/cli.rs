mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use axum::http::StatusCode;
use codecoach::xapi::Statement;
use common::*;
use serde_json::{json, Value};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_codecoach"));
    for (k, _) in std::env::vars() {
        if k.starts_with("AGENT_") {
            cmd.env_remove(k);
        }
    }
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "exit {:?}\nstdout: {stdout}\nstderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
    stdout
}

#[test]
fn seed_loads_the_sample_course() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let course = repo_root().join("sample/course");
    let out = ok(bin().arg("--data-dir").arg(&data).env("AGENT_ANONYMIZATION_KEY", "k").arg("seed").arg(&course).output().unwrap());
    let summary: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary, json!({"concepts": 3, "lectures": ["week1"], "exercises": ["countdown", "sum2"]}));
    assert!(data.join("exercises/sum2/tests/t3/expected").is_file());
    assert!(data.join("lectures/week1.json").is_file());
    assert!(data.join("concepts.json").is_file());
}

#[test]
fn grade_scores_reference_and_broken_programs() {
    let dir = tempfile::tempdir().unwrap();
    let exercise = repo_root().join("sample/course/exercises/sum2");
    let report = |src: &str| -> Value {
        let file = dir.path().join("attempt.py");
        std::fs::write(&file, src).unwrap();
        let out = ok(bin().arg("--data-dir").arg(dir.path().join("unused")).arg("grade").arg(&exercise).arg(&file).output().unwrap());
        serde_json::from_str(&out).unwrap()
    };
    let good = report(&std::fs::read_to_string(exercise.join("solution/main.py")).unwrap());
    assert_eq!(good["all_passed"], true);
    assert_eq!(good["mark_awarded"], "3");
    assert_eq!(good["total_marks"], "3");
    let concat = report("print(input() + input())\n");
    assert_eq!(concat["all_passed"], false);
    assert_eq!(concat["mark_awarded"], "0");
    assert!(!dir.path().join("unused/statements.ndjson").exists(), "grading offline logs nothing");
}

#[test]
fn grade_rejects_missing_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("a.py");
    std::fs::write(&src, "print(1)").unwrap();
    let out = bin().arg("grade").arg(dir.path().join("nope")).arg(&src).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("exercise.toml"));
}

#[tokio::test]
async fn export_logs_writes_every_statement() {
    let h = Harness::new();
    for material in ["week1", "week2"] {
        let (s, _) = h.call("POST", "/events/viewer", Some(LEARNER), Some(json!({"material_id": material, "action": "opened"}))).await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let data = h.dir.path().join("data");
    let out_file = h.dir.path().join("export.ndjson");
    ok(bin().arg("--data-dir").arg(&data).arg("export-logs").arg(&out_file).output().unwrap());
    let text = std::fs::read_to_string(&out_file).unwrap();
    let lines: Vec<Statement> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines, h.state.lrs.query(&Default::default()).unwrap());

    let stdout = ok(bin().arg("--data-dir").arg(&data).arg("export-logs").arg("-").output().unwrap());
    assert_eq!(stdout, text);
}

#[test]
fn sample_config_parses_and_bad_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = codecoach_server::ServerConfig::load(&repo_root().join("sample/server.toml")).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.tokens.len(), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "port = 80\nmystery = true\n").unwrap();
    let out = bin().arg("--config").arg(&bad).arg("export-logs").arg("-").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));

    let out = bin().env("AGENT_PORT", "not-a-port").arg("export-logs").arg("-").output().unwrap();
    assert!(!out.status.success());
}
