// Handlers return ready responses as their error type.
#![allow(clippy::result_large_err)]

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::header::{HeaderName, CONTENT_TYPE};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crs_core::corpus::{ingest, scan_corpus_with, Format};
use crs_core::paraphrase::ParaphraseSuggestion;
use crs_core::pipeline::{EngineError, PhaseTimings};
use crs_core::{Engine, Mode};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::AppState;

/// Allowance for the JSON around `text` in analyze and paraphrase bodies.
pub const ENVELOPE_BYTES: usize = 1024;

const SERVER_TIMING: HeaderName = HeaderName::from_static("server-timing");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParaphraseResponse {
    pub suggestions: Vec<ParaphraseSuggestion>,
}

#[derive(Debug, Deserialize)]
struct BatchParams {
    mode: Option<String>,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    let body = ErrorBody {
        error: kind.into(),
        message: message.into(),
    };
    (status, Json(body)).into_response()
}

fn engine_error(e: &EngineError) -> Response {
    let (status, kind) = match e {
        EngineError::InputTooLarge { .. } => (StatusCode::PAYLOAD_TOO_LARGE, "InputTooLarge"),
        EngineError::InvalidEncoding { .. } => (StatusCode::BAD_REQUEST, "InvalidEncoding"),
        EngineError::InvalidMode(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidMode"),
        EngineError::EngineNotReady(_) => (StatusCode::SERVICE_UNAVAILABLE, "EngineNotReady"),
        EngineError::Training(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Training"),
    };
    error(status, kind, e.to_string())
}

fn not_ready() -> Response {
    error(
        StatusCode::SERVICE_UNAVAILABLE,
        "EngineNotReady",
        "no engine snapshot loaded",
    )
}

fn json_bytes(status: StatusCode, body: Vec<u8>) -> Response {
    let mut r = (status, body).into_response();
    r.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static("application/json"));
    r
}

fn server_timing(t: &PhaseTimings) -> HeaderValue {
    let v = format!(
        "detect;dur={:.3}, classify;dur={:.3}, highlight;dur={:.3}, paraphrase;dur={:.3}",
        t.detect, t.classify, t.highlight, t.paraphrase
    );
    HeaderValue::from_str(&v).expect("ascii header")
}

fn parse_mode(engine: &Engine, mode: Option<&str>) -> Result<Mode, Response> {
    match mode {
        None => Ok(engine.mode()),
        Some(m) => m.parse().map_err(|e: EngineError| engine_error(&e)),
    }
}

/// Run blocking engine work under the configured request timeout.
async fn run<T, F>(state: &AppState, f: F) -> Result<T, Response>
where
    T: Send + 'static,
    F: FnOnce() -> T + Send + 'static,
{
    let timeout = state.config().request_timeout();
    match tokio::time::timeout(timeout, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(error(
            StatusCode::INTERNAL_SERVER_ERROR,
            "Internal",
            e.to_string(),
        )),
        Err(_) => Err(error(
            StatusCode::SERVICE_UNAVAILABLE,
            "Timeout",
            format!("request exceeded {} ms", timeout.as_millis()),
        )),
    }
}

fn parse_request(body: &[u8]) -> Result<AnalyzeRequest, Response> {
    serde_json::from_slice(body)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "MalformedJson", e.to_string()))
}

fn check_size(state: &AppState, text: &str) -> Result<(), Response> {
    let max = state.config().max_body_bytes;
    if text.len() > max {
        return Err(engine_error(&EngineError::InputTooLarge {
            len: text.len(),
            max,
        }));
    }
    Ok(())
}

async fn health(State(state): State<AppState>) -> Response {
    match state.engine() {
        Some(e) => Json(serde_json::json!({
            "status": "ok",
            "mode": e.mode(),
            "versions": e.context().versions,
        }))
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(serde_json::json!({"status": "unavailable"})),
        )
            .into_response(),
    }
}

async fn analyze(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(engine) = state.engine() else {
        return not_ready();
    };
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let mode = match parse_mode(&engine, req.mode.as_deref()) {
        Ok(m) => m,
        Err(r) => return r,
    };
    if let Err(r) = check_size(&state, &req.text) {
        return r;
    }
    let result = run(&state, move || engine.analyze_with(&req.text, mode)).await;
    match result {
        Ok(Ok(report)) => {
            let timing = server_timing(&report.timing_ms);
            let body = serde_json::to_vec(&report).expect("report serializes");
            let mut r = json_bytes(StatusCode::OK, body);
            r.headers_mut().insert(SERVER_TIMING, timing);
            r
        }
        Ok(Err(e)) => engine_error(&e),
        Err(r) => r,
    }
}

async fn paraphrase(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(engine) = state.engine() else {
        return not_ready();
    };
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let mode = match parse_mode(&engine, req.mode.as_deref()) {
        Ok(m) => m,
        Err(r) => return r,
    };
    if let Err(r) = check_size(&state, &req.text) {
        return r;
    }
    match run(&state, move || engine.analyze_with(&req.text, mode)).await {
        Ok(Ok(report)) if report.verdict.is_offensive() => {
            let timing = server_timing(&report.timing_ms);
            let mut r = Json(ParaphraseResponse {
                suggestions: report.suggestions,
            })
            .into_response();
            r.headers_mut().insert(SERVER_TIMING, timing);
            r
        }
        Ok(Ok(_)) => error(
            StatusCode::CONFLICT,
            "NoOffenceFound",
            "the text contains no offence",
        ),
        Ok(Err(e)) => engine_error(&e),
        Err(r) => r,
    }
}

async fn batch(
    State(state): State<AppState>,
    Query(params): Query<BatchParams>,
    body: Bytes,
) -> Response {
    let Some(engine) = state.engine() else {
        return not_ready();
    };
    let mode = match parse_mode(&engine, params.mode.as_deref()) {
        Ok(m) => m,
        Err(r) => return r,
    };
    if let Err(e) = std::str::from_utf8(&body) {
        return error(
            StatusCode::BAD_REQUEST,
            "MalformedFraming",
            format!("body is not UTF-8 (valid up to byte {})", e.valid_up_to()),
        );
    }
    let result = run(&state, move || {
        let mut records = ingest(&body[..], Format::Jsonl)?;
        let mut stats = scan_corpus_with(&mut records, &engine, mode, |_| {});
        stats.skipped += records.warnings().len() as u64;
        Ok::<_, crs_core::corpus::CorpusError>(stats)
    })
    .await;
    match result {
        Ok(Ok(stats)) => Json(stats).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, "MalformedFraming", e.to_string()),
        Err(r) => r,
    }
}

fn cors(origins: &[HeaderValue]) -> CorsLayer {
    CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins.iter().cloned()))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([CONTENT_TYPE])
        .expose_headers([SERVER_TIMING])
}

/// All `/v1` routes over `state`.
pub fn router(state: AppState) -> Router {
    let cfg = state.config();
    // Room for the JSON envelope; the text itself is checked after parsing.
    let json_limit = DefaultBodyLimit::max(cfg.max_body_bytes + ENVELOPE_BYTES);
    let app = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/analyze", post(analyze).layer(json_limit))
        .route("/v1/paraphrase", post(paraphrase).layer(json_limit))
        .route(
            "/v1/batch",
            post(batch).layer(DefaultBodyLimit::max(cfg.batch_max_bytes)),
        );
    let app = if state.cors_origins().is_empty() {
        app
    } else {
        app.layer(cors(state.cors_origins()))
    };
    app.with_state(state)
}
