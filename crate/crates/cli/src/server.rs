//! Batch HTTP service.
//!
//! | route              | body                  | success            |
//! |--------------------|-----------------------|--------------------|
//! | `POST /v1/vitals`  | trace CSV             | 200 + report JSON  |
//! | `POST /v1/identify`| `{"probe": [...]}`    | 200 + match JSON   |
//! | `GET /healthz`     | —                     | 200 + `ok`         |
//!
//! Unreadable request bodies answer 400, inputs rejected by the computation
//! answer 422; both carry `{"error": <name>}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use tokio::net::TcpListener;

use pulsekit_core::identity::IdentityError;
use pulsekit_core::report::{analyze_trace, canonical_json};
use pulsekit_core::{AnalysisConfig, EmbeddingGallery, Error};

use crate::config::{parse_band, AnalysisOverrides};

/// Largest accepted request body; a 10-minute four-ROI trace at 60 fps fits.
pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

/// Read-only state shared by all handlers.
#[derive(Debug, Clone)]
pub struct ServiceState {
    pub analysis: AnalysisConfig,
    pub gallery: Option<EmbeddingGallery>,
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(status: StatusCode, name: &str) -> Response {
    json_response(status, canonical_json(&BTreeMap::from([("error", name)])))
}

fn domain_error(e: &Error) -> Response {
    let status = if e.is_malformed_input() { StatusCode::BAD_REQUEST } else { StatusCode::UNPROCESSABLE_ENTITY };
    error_response(status, e.name())
}

/// Optional per-request overrides: `?fs=30&window=1.6&band=0.7:4.0`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitalsQuery {
    fs: Option<f64>,
    window: Option<f64>,
    band: Option<String>,
}

impl VitalsQuery {
    fn apply(&self, base: &AnalysisConfig) -> Result<AnalysisConfig, String> {
        let mut cfg = base.clone();
        let overrides = AnalysisOverrides {
            fs: self.fs,
            window: self.window,
            stride: None,
            band: self.band.as_deref().map(parse_band).transpose()?,
        };
        let built = overrides.build()?;
        if self.fs.is_some() {
            cfg.fs = built.fs;
        }
        if self.window.is_some() {
            cfg.pos.window_seconds = built.pos.window_seconds;
        }
        if self.band.is_some() {
            cfg.pos.band_lo_hz = built.pos.band_lo_hz;
            cfg.pos.band_hi_hz = built.pos.band_hi_hz;
        }
        Ok(cfg)
    }
}

async fn vitals(
    State(state): State<Arc<ServiceState>>,
    query: Result<Query<VitalsQuery>, QueryRejection>,
    body: String,
) -> Response {
    let cfg = match query.map_err(|e| e.body_text()).and_then(|Query(q)| q.apply(&state.analysis)) {
        Ok(cfg) => cfg,
        Err(_) => return error_response(StatusCode::BAD_REQUEST, "InvalidQuery"),
    };
    // Trace analysis is CPU-bound; keep it off the async workers.
    let result = tokio::task::spawn_blocking(move || analyze_trace(&body, &cfg)).await;
    match result {
        Ok(Ok(report)) => json_response(StatusCode::OK, canonical_json(&report)),
        Ok(Err(e)) => domain_error(&e),
        Err(_) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentifyRequest {
    probe: Vec<f64>,
}

async fn identify(State(state): State<Arc<ServiceState>>, body: String) -> Response {
    let request: IdentifyRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(_) => return error_response(StatusCode::BAD_REQUEST, "MalformedBody"),
    };
    let Some(gallery) = state.gallery.as_ref() else {
        return domain_error(&Error::Identity(IdentityError::EmptyGallery));
    };
    match gallery.identify(&request.probe) {
        Ok(m) => json_response(StatusCode::OK, canonical_json(&m)),
        Err(e) => domain_error(&Error::Identity(e)),
    }
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/v1/vitals", post(vitals))
        .route("/v1/identify", post(identify))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(Arc::new(state))
}

/// Serves until the listener fails or the task is dropped.
pub async fn serve(listener: TcpListener, state: ServiceState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
