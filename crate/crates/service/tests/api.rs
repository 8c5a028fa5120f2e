use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use viscot_core::corpus::FARMER_QUERY;
use viscot_core::graph::json::validate;
use viscot_core::llm::{ReplayBackend, ScriptedBackend};
use viscot_core::session::{Engine, SessionStore};
use viscot_core::{Backend, BackendError, ReasoningGraph};
use viscot_service::{router, AppState, DROPPED_NOTICE};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/testdata/fixtures")
}

fn state_with(backend: Arc<dyn Backend>) -> AppState {
    AppState::new(Engine::default(), backend).with_heartbeat(Duration::from_secs(30))
}

fn app() -> Router {
    router(Arc::new(state_with(Arc::new(ReplayBackend::open(fixtures())))), &[])
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

/// Asserts the graph in a response is schema-valid and structurally sound,
/// and returns its node count.
fn checked_graph(view: &Value) -> usize {
    let graph = &view["graph"];
    validate(graph).unwrap();
    let g = ReasoningGraph::from_json_str(&graph.to_string()).unwrap();
    assert!(g.check_invariants().is_ok(), "{}", g.check_invariants());
    g.len()
}

async fn farmer(app: &Router) -> String {
    let (status, view) = call(app, "POST", "/sessions", Some(json!({"query": FARMER_QUERY}))).await;
    assert_eq!(status, StatusCode::CREATED, "{view}");
    assert_eq!(checked_graph(&view), 9);
    view["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn create_validation_and_backend_errors() {
    let app = app();
    farmer(&app).await;
    let (status, err) = call(&app, "POST", "/sessions", Some(json!({"query": ""}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "VALIDATION");
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"text": "x"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let down = ScriptedBackend::default();
    down.push_error(BackendError::Unreachable("connection refused".into()));
    let app = router(Arc::new(state_with(Arc::new(down))), &[]);
    let (status, err) = call(&app, "POST", "/sessions", Some(json!({"query": FARMER_QUERY}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(err["code"], "BACKEND_UNREACHABLE");
}

#[tokio::test]
async fn prune_then_accept() {
    let app = app();
    let id = farmer(&app).await;
    let (status, view) = call(&app, "POST", &format!("/sessions/{id}/interventions"), Some(json!({"kind": "prune", "node": "v8"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(checked_graph(&view), 7);
    assert_eq!(view["intervention_count"], 1);

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/accept"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"answer": "98"}));

    let (status, err) = call(&app, "POST", &format!("/sessions/{id}/accept"), None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("SESSION_CLOSED")));
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/interventions"), Some(json!({"kind": "flag", "node": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, full) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(full["status"], "ACCEPTED");
    assert_eq!(full["events"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn intervention_errors() {
    let app = app();
    let id = farmer(&app).await;
    let url = format!("/sessions/{id}/interventions");
    call(&app, "POST", &url, Some(json!({"kind": "flag", "node": "v8"}))).await;

    let (status, err) = call(&app, "POST", &url, Some(json!({"kind": "graft", "parent": "v8", "text": "x"}))).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("INVALID_PARENT")));
    let (status, err) = call(&app, "POST", &url, Some(json!({"kind": "flag", "node": "v99"}))).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("NODE_NOT_FOUND")));
    let (status, err) = call(&app, "POST", &url, Some(json!({"kind": "graft", "parent": "v7", "text": "  "}))).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("VALIDATION")));
    let (status, _) = call(&app, "POST", &url, Some(json!({"kind": "rotate", "node": 1}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, err) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("SESSION_NOT_FOUND")));
    let (status, _) = call(&app, "POST", "/sessions/nope/regenerate", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn graft_and_regenerate_extends_from_graft() {
    let app = app();
    let id = farmer(&app).await;
    let url = format!("/sessions/{id}/interventions");
    call(&app, "POST", &url, Some(json!({"kind": "prune", "node": "v8"}))).await;
    let (_, view) = call(&app, "POST", &url, Some(json!({"kind": "graft", "parent": "v7", "text": "Only the animals' legs are counted."}))).await;
    let grafted = view["graph"]["frontier"].clone();
    assert_eq!(checked_graph(&view), 8);

    let (status, view) = call(&app, "POST", &format!("/sessions/{id}/regenerate"), None).await;
    assert_eq!(status, StatusCode::OK, "{view}");
    assert_eq!(checked_graph(&view), 9);
    let frontier = view["graph"]["frontier"].clone();
    assert!(view["graph"]["edges"].as_array().unwrap().contains(&json!([grafted, frontier])));
    let (_, body) = call(&app, "POST", &format!("/sessions/{id}/accept"), None).await;
    assert_eq!(body["answer"], "98");
}

#[tokio::test]
async fn failed_regenerate_is_atomic() {
    let dir = tempfile::tempdir().unwrap();
    let state = state_with(Arc::new(ReplayBackend::open(fixtures()))).with_store(SessionStore::new(dir.path()));
    let app = router(Arc::new(state), &[]);
    let id = farmer(&app).await;
    call(&app, "POST", &format!("/sessions/{id}/interventions"), Some(json!({"kind": "flag", "node": "v9"}))).await;

    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let on_disk = std::fs::read(dir.path().join(&id).join("events.jsonl")).unwrap();
    let (status, err) = call(&app, "POST", &format!("/sessions/{id}/regenerate"), None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::BAD_GATEWAY, Some("FIXTURE_MISS")));
    let (_, after) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(before, after);
    assert_eq!(std::fs::read(dir.path().join(&id).join("events.jsonl")).unwrap(), on_disk);
    assert!(dir.path().join(&id).join("graph.json").is_file());
}

#[tokio::test]
async fn accept_without_answer() {
    let app = app();
    let id = farmer(&app).await;
    call(&app, "POST", &format!("/sessions/{id}/interventions"), Some(json!({"kind": "prune", "node": "v1"}))).await;
    let (status, err) = call(&app, "POST", &format!("/sessions/{id}/accept"), None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("NO_ANSWER")));
}

async fn next_line(body: &mut Body, buf: &mut String) -> Option<String> {
    loop {
        if let Some(i) = buf.find('\n') {
            let line: String = buf.drain(..=i).collect();
            return Some(line.trim_end().to_string());
        }
        let frame = body.frame().await?.unwrap();
        if let Ok(data) = frame.into_data() {
            buf.push_str(std::str::from_utf8(&data).unwrap());
        }
    }
}

#[tokio::test]
async fn event_stream_delivers_log_in_order() {
    let app = app();
    let id = farmer(&app).await;
    call(&app, "POST", &format!("/sessions/{id}/interventions"), Some(json!({"kind": "prune", "node": "v8"}))).await;

    let req = Request::get(format!("/sessions/{id}/events")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "application/x-ndjson");
    let mut body = resp.into_body();
    let mut buf = String::new();
    let mut kinds = Vec::new();
    for expected in 0..3u64 {
        let line = next_line(&mut body, &mut buf).await.unwrap();
        let event: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(event["sequence"], expected);
        kinds.push(event["kind"].as_str().unwrap().to_string());
    }
    assert_eq!(kinds, ["STARTED", "GENERATED", "INTERVENED"]);

    call(&app, "POST", &format!("/sessions/{id}/accept"), None).await;
    let line = next_line(&mut body, &mut buf).await.unwrap();
    let event: Value = serde_json::from_str(&line).unwrap();
    assert_eq!((event["sequence"].as_u64(), event["kind"].as_str()), (Some(3), Some("ACCEPTED")));
    assert!(next_line(&mut body, &mut buf).await.is_none());
}

#[tokio::test]
async fn slow_subscriber_is_dropped() {
    let state = state_with(Arc::new(ReplayBackend::open(fixtures()))).with_event_buffer(1);
    let app = router(Arc::new(state), &[]);
    let id = farmer(&app).await;
    let req = Request::get(format!("/sessions/{id}/events")).body(Body::empty()).unwrap();
    let mut body = app.clone().oneshot(req).await.unwrap().into_body();
    for node in ["v2", "v3", "v4"] {
        call(&app, "POST", &format!("/sessions/{id}/interventions"), Some(json!({"kind": "flag", "node": node}))).await;
    }
    let mut buf = String::new();
    let mut lines = Vec::new();
    while let Some(line) = next_line(&mut body, &mut buf).await {
        lines.push(line);
    }
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2], DROPPED_NOTICE);
}

#[tokio::test]
async fn cors_headers_when_configured() {
    let state = Arc::new(state_with(Arc::new(ReplayBackend::open(fixtures()))));
    let app = router(state, &["http://localhost:5173".to_string()]);
    let req = Request::get("/sessions/x")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
}
