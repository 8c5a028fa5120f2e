use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use viscot_core::corpus::{FARMER_QUERY, FARMER_TRACE};
use viscot_core::session::{read_events, EventKind};
use viscot_core::ReasoningGraph;

fn testdata() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/testdata")
}

fn viscot(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_viscot"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn script_file(dir: &Path, texts: &[&str]) -> String {
    let path = dir.join("script.json");
    std::fs::write(&path, serde_json::to_string(texts).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_prune_accept_prints_98() {
    let fixtures = testdata().join("fixtures");
    let out = viscot(&["--fixtures", fixtures.to_str().unwrap(), "run", FARMER_QUERY], "prune 8; accept\n");
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().last(), Some("98"));
}

#[test]
fn run_reports_bad_commands_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let script = script_file(dir.path(), &[FARMER_TRACE]);
    let out = viscot(
        &["--backend", "scripted", "--script", &script, "run", FARMER_QUERY],
        "flag 8\ngraft 8 The farmer is not counted.\nbogus\nprune 8\naccept\n",
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("flagged"), "{err}");
    assert!(err.contains("unknown command"), "{err}");
    assert_eq!(stdout(&out).lines().last(), Some("98"));
}

#[test]
fn run_without_accept_fails() {
    let fixtures = testdata().join("fixtures");
    let out = viscot(&["--fixtures", fixtures.to_str().unwrap(), "run", FARMER_QUERY], "flag 8\n");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_errors_exit_2() {
    let out = viscot(&["--backend", "http", "--endpoint", "not a url", "run", "q"], "");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("endpoint"));

    let out = viscot(&["--json-errors", "--backend", "replay", "run", "q"], "");
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn unreachable_backend_exits_1() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let out = viscot(
        &["--json-errors", "--backend", "http", "--retries", "0", "--endpoint", &endpoint, "run", "q"],
        "",
    );
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "backend");
}

#[test]
fn strict_mode_regenerates_after_each_intervention() {
    let dir = tempfile::tempdir().unwrap();
    let script = script_file(dir.path(), &[FARMER_TRACE, "8. Therefore, the answer is 98."]);
    let store = dir.path().join("sessions");
    let fixtures = dir.path().join("fixtures");
    let out = viscot(
        &[
            "--backend", "scripted", "--script", &script,
            "--store", store.to_str().unwrap(),
            "--fixtures", fixtures.to_str().unwrap(),
            "--strict-alg1", "run", FARMER_QUERY,
        ],
        "prune 8\naccept\n",
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().last(), Some("98"));

    let session_dir = std::fs::read_dir(&store).unwrap().next().unwrap().unwrap().path();
    let kinds: Vec<EventKind> = read_events(&session_dir.join("events.jsonl")).unwrap().iter().map(|e| e.kind()).collect();
    for (i, k) in kinds.iter().enumerate() {
        if *k == EventKind::Intervened {
            assert_eq!(kinds[i + 1], EventKind::Regenerated);
        }
    }
    assert!(kinds.contains(&EventKind::Intervened));

    // recorded fixtures replay the saved session exactly
    let out = viscot(&["--fixtures", fixtures.to_str().unwrap(), "replay", session_dir.to_str().unwrap()], "");
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn replay_shipped_session_and_detect_tampering() {
    let fixtures = testdata().join("fixtures");
    let shipped = testdata().join("sessions/farmer");
    let out = viscot(&["--fixtures", fixtures.to_str().unwrap(), "replay", shipped.to_str().unwrap()], "");
    assert!(out.status.success(), "{}", stderr(&out));

    let dir = tempfile::tempdir().unwrap();
    for f in ["events.jsonl", "graph.json", "meta.json"] {
        std::fs::copy(shipped.join(f), dir.path().join(f)).unwrap();
    }
    let graph = std::fs::read_to_string(dir.path().join("graph.json")).unwrap();
    std::fs::write(dir.path().join("graph.json"), graph.replace("Only the animals", "Only the cows")).unwrap();
    let out = viscot(&["--fixtures", fixtures.to_str().unwrap(), "replay", dir.path().to_str().unwrap()], "");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn export_formats() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = testdata().join("fixtures");
    let store = dir.path().join("s");
    let out = viscot(
        &["--fixtures", fixtures.to_str().unwrap(), "--store", store.to_str().unwrap(), "run", FARMER_QUERY],
        "flag 8\naccept\n",
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let session_dir = std::fs::read_dir(&store).unwrap().next().unwrap().unwrap().path();

    let dot = dir.path().join("g.dot");
    let out = viscot(&["--format", "dot", "export", session_dir.to_str().unwrap(), "-o", dot.to_str().unwrap()], "");
    assert!(out.status.success());
    let dot = std::fs::read_to_string(dot).unwrap();
    let v8 = dot.lines().find(|l| l.trim_start().starts_with("v8 [")).unwrap();
    assert!(v8.contains("color=red"), "{v8}");

    let out = viscot(&["--format", "json", "export", session_dir.to_str().unwrap()], "");
    let json = stdout(&out);
    assert_eq!(json, std::fs::read_to_string(session_dir.join("graph.json")).unwrap());
    assert_eq!(ReasoningGraph::from_json_str(&json).unwrap().to_json_string(), json);
}

#[test]
fn eval_demo_suite() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = testdata().join("suite/manifest.json");
    let out = viscot(&["eval", manifest.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--jobs", "2"], "");
    assert!(out.status.success(), "{}", stderr(&out));
    let overall = stdout(&out).lines().find(|l| l.starts_with("OVERALL")).unwrap().to_string();
    assert!(overall.split_whitespace().any(|w| w == "66.7"), "{overall}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall"]["accuracy"], 66.7);
    assert!(dir.path().join("report.txt").is_file());
}

#[test]
fn eval_with_errored_task_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let task = serde_json::json!({
        "id": "missing", "query": "never recorded", "gold_answer": "1",
        "fixtures": testdata().join("fixtures"), "mode": "STANDARD_COT"
    });
    std::fs::write(dir.path().join("t.json"), task.to_string()).unwrap();
    std::fs::write(dir.path().join("m.json"), r#"{"tasks": ["t.json"]}"#).unwrap();
    let out = viscot(
        &["eval", dir.path().join("m.json").to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()],
        "",
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("ERROR"));
}
