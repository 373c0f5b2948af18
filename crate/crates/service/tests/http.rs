use std::sync::OnceLock;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use crs_core::{Engine, Mode};
use crs_service::{router, AppState, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

fn engine() -> Engine {
    static E: OnceLock<Engine> = OnceLock::new();
    E.get_or_init(|| Engine::builtin().unwrap()).clone()
}

fn app() -> Router {
    router(AppState::with_engine(ServiceConfig::default(), None, Some(engine())).unwrap())
}

async fn send(
    app: &Router,
    method: &str,
    uri: &str,
    body: impl Into<Body>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        to_bytes(resp.into_body(), usize::MAX)
            .await
            .unwrap()
            .to_vec(),
    )
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn analyze_body(text: &str) -> String {
    serde_json::json!({ "text": text }).to_string()
}

#[tokio::test]
async fn health_reports_versions() {
    let (status, body) = send(&app(), "GET", "/v1/health", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["status"], "ok");
    assert_eq!(
        v["versions"]["ruleset"],
        engine().context().versions.ruleset.as_str()
    );
}

#[tokio::test]
async fn health_without_engine_is_503() {
    let app = router(AppState::with_engine(ServiceConfig::default(), None, None).unwrap());
    let (status, _) = send(&app, "GET", "/v1/health", Body::empty()).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, _) = send(&app, "POST", "/v1/analyze", analyze_body("hi")).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn clean_text() {
    let (status, body) = send(
        &app(),
        "POST",
        "/v1/analyze",
        analyze_body("thanks, merged"),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["verdict"], "clean");
    assert_eq!(v["classes"], serde_json::json!([]));
    assert_eq!(v["suggestions"], serde_json::json!([]));
}

#[tokio::test]
async fn offensive_fixture_spans_index_submitted_bytes() {
    let text = "Ärger: you ïdiot, this PR is crap 👎";
    let (status, body) = send(&app(), "POST", "/v1/analyze", analyze_body(text)).await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["verdict"], "offensive");
    assert_eq!(v["suggestions"].as_array().unwrap().len(), 3);
    let matches = v["matches"].as_array().unwrap();
    assert!(!matches.is_empty());
    for m in matches {
        let (s, e) = (
            m["span"]["start"].as_u64().unwrap() as usize,
            m["span"]["end"].as_u64().unwrap() as usize,
        );
        assert_eq!(
            &text.as_bytes()[s..e],
            m["surface"].as_str().unwrap().as_bytes()
        );
    }
}

#[tokio::test]
async fn analyze_errors() {
    let app = app();
    let (status, body) = send(&app, "POST", "/v1/analyze", "{\"text\": ").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["error"], "MalformedJson");

    let bad_mode = serde_json::json!({"text": "hi", "mode": "paranoid"}).to_string();
    let (status, _) = send(&app, "POST", "/v1/analyze", bad_mode).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let big = analyze_body(&"a".repeat(100 * 1024));
    let (status, _) = send(&app, "POST", "/v1/analyze", big).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);

    let raw = vec![b'x'; 100 * 1024];
    let (status, _) = send(&app, "POST", "/v1/analyze", raw).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn mode_override() {
    let body = serde_json::json!({"text": "you idiot", "mode": "strict"}).to_string();
    let (status, body) = send(&app(), "POST", "/v1/analyze", body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["mode"], "strict");
}

#[tokio::test]
async fn server_timing_header() {
    let req = Request::post("/v1/analyze")
        .body(Body::from(analyze_body("you idiot")))
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    let h = resp.headers()["server-timing"].to_str().unwrap();
    assert!(h.starts_with("detect;dur="), "{h}");
}

#[tokio::test]
async fn cors_preflight() {
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/v1/analyze")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers()["access-control-allow-origin"],
        "http://localhost:5173"
    );
}

#[tokio::test]
async fn paraphrase_contract() {
    let app = app();
    let (status, body) = send(&app, "POST", "/v1/paraphrase", analyze_body("you idiot")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["suggestions"].as_array().unwrap().len(), 3);

    let (status, body) = send(&app, "POST", "/v1/paraphrase", analyze_body("looks good")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json(&body)["error"], "NoOffenceFound");
}

#[tokio::test]
async fn rewriter_offline_falls_back() {
    let mut cfg = ServiceConfig::default();
    cfg.remote.rewriter_url = Some("http://127.0.0.1:1/rewrite".into());
    cfg.remote.timeout_ms = 300;
    let app = router(AppState::new(cfg, None).unwrap());
    let (status, body) = send(&app, "POST", "/v1/paraphrase", analyze_body("you idiot")).await;
    assert_eq!(status, StatusCode::OK);
    let s = &json(&body)["suggestions"];
    assert_eq!(s.as_array().unwrap().len(), 3);
    assert_eq!(s[2]["strategy"], "deletion");
    assert_eq!(s[2]["fallback"], true);
}

fn record(id: &str, body: &str) -> String {
    serde_json::json!({"platform": "gitter", "id": id, "created_at": "2021-11-02T10:00:00Z", "body": body}).to_string()
}

#[tokio::test]
async fn batch_counts() {
    let app = app();
    let three = [
        record("1", "hi"),
        record("2", "you idiot"),
        record("3", "thanks"),
    ]
    .join("\n");
    let (status, body) = send(&app, "POST", "/v1/batch", three.clone()).await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    assert_eq!(
        (v["total"].as_u64(), v["offensive"].as_u64()),
        (Some(3), Some(1))
    );
    assert_eq!(v["skipped"], 0);

    let mixed = format!("{three}\nnot json\n{{\"id\": 4}}\n");
    let (status, body) = send(&app, "POST", "/v1/batch", mixed).await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["total"], 3);
    assert_eq!(v["skipped"], 2);

    let (status, body) = send(&app, "POST", "/v1/batch", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["total"], 0);

    let (status, _) = send(&app, "POST", "/v1/batch", vec![b'{', 0xff, 0xfe]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = send(&app, "POST", "/v1/batch?mode=loose", three).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn identical_requests_give_identical_bytes() {
    let app = app();
    let body = analyze_body("Stop pushing this sh!t, you a$$hole — ça suffit 日本");
    let mut tasks = Vec::new();
    for _ in 0..16 {
        let (app, body) = (app.clone(), body.clone());
        tasks.push(tokio::spawn(async move {
            send(&app, "POST", "/v1/analyze", body).await
        }));
    }
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, b) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(b);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn swap_keeps_serving() {
    let state = AppState::with_engine(ServiceConfig::default(), None, Some(engine())).unwrap();
    let app = router(state.clone());
    let held = state.engine().unwrap();
    let mut ctx = engine().context().clone();
    ctx.mode = Mode::Strict;
    state.swap(Engine::new(ctx).unwrap());
    let (status, body) = send(&app, "GET", "/v1/health", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["mode"], "strict");
    // The old snapshot is still usable by whoever held it.
    assert_eq!(held.mode(), Mode::Sensitive);
}

#[test]
fn missing_artifact_fails_at_startup() {
    let mut cfg = ServiceConfig::default();
    cfg.artifacts.model = Some("/nonexistent/model.json".into());
    cfg.artifacts.multilabel_model = Some("/nonexistent/ml.json".into());
    let err = AppState::new(cfg, None).unwrap_err().to_string();
    assert!(
        err.contains("model artifact /nonexistent/model.json"),
        "{err}"
    );
}

#[test]
fn reload_rereads_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("crs.toml");
    std::fs::write(&path, "mode = \"sensitive\"\n").unwrap();
    let state = AppState::new(
        ServiceConfig::load(Some(&path)).unwrap(),
        Some(path.clone()),
    )
    .unwrap();
    std::fs::write(&path, "mode = \"strict\"\n").unwrap();
    state.reload().unwrap();
    assert_eq!(state.engine().unwrap().mode(), Mode::Strict);
    std::fs::write(&path, "mode = \"bogus\"\n").unwrap();
    assert!(state.reload().is_err());
    assert_eq!(state.engine().unwrap().mode(), Mode::Strict);
}
