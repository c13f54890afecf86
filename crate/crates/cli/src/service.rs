//! HTTP evaluation service. Stateless apart from the scene loaded at startup.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use serde_json::json;

use lidarsim_core::presets::preset_catalog;
use lidarsim_core::scene::MaterialSurface;

use crate::eval::{evaluate_request, parse_request, EvalError, SceneContext};

pub const TIMING_HEADER: &str = "x-eval-time-ms";

pub struct AppState {
    pub ctx: SceneContext,
}

#[derive(Serialize)]
struct SceneSummary<'a> {
    id: &'a str,
    triangle_count: usize,
    bounds: Option<[[f64; 3]; 2]>,
    materials: &'a [MaterialSurface],
    /// `[v0, v1, v2]` per triangle, world frame.
    triangles: Vec<[[f64; 3]; 3]>,
    /// Material index per triangle.
    surfaces: Vec<usize>,
}

fn json_response(status: StatusCode, body: String) -> Response {
    let mut r = (status, body).into_response();
    r.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    r
}

async fn health() -> Response {
    json_response(StatusCode::OK, json!({"status": "ok"}).to_string())
}

async fn scene(State(state): State<Arc<AppState>>) -> Response {
    let s = &state.ctx.scene;
    let summary = SceneSummary {
        id: &state.ctx.id,
        triangle_count: s.triangles().len(),
        bounds: s.bounds().map(|b| [b.min.into(), b.max.into()]),
        materials: s.surfaces(),
        triangles: s.triangles().iter().map(|t| t.vertices.map(|v| v.into())).collect(),
        surfaces: s.triangles().iter().map(|t| t.surface).collect(),
    };
    json_response(StatusCode::OK, serde_json::to_string(&summary).expect("summary serializes"))
}

async fn presets() -> Response {
    json_response(StatusCode::OK, serde_json::to_string(&preset_catalog()).expect("catalog serializes"))
}

fn error_response(e: &EvalError) -> Response {
    let (status, body) = match e {
        EvalError::Validation(fields) => (
            StatusCode::BAD_REQUEST,
            json!({"error": "validation failed", "fields": fields}),
        ),
        EvalError::UndefinedMetric(m) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({"error": "undefined metric", "message": m}),
        ),
        EvalError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal", "message": m})),
    };
    json_response(status, body.to_string())
}

async fn evaluate(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let start = Instant::now();
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(e) => return error_response(&e),
    };
    let result = tokio::task::spawn_blocking(move || evaluate_request(&state.ctx, &req)).await;
    let mut response = match result {
        Ok(Ok(resp)) => json_response(StatusCode::OK, resp.to_json()),
        Ok(Err(e)) => error_response(&e),
        Err(join) => error_response(&EvalError::Internal(format!("evaluation task failed: {join}"))),
    };
    let ms = format!("{:.3}", start.elapsed().as_secs_f64() * 1e3);
    if let Ok(v) = HeaderValue::from_str(&ms) {
        response.headers_mut().insert(TIMING_HEADER, v);
    }
    response
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/scene", get(scene))
        .route("/api/presets", get(presets))
        .route("/api/evaluate", post(evaluate))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
