use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use pedrisk_core::growth::{percentile_curves, Metric, PercentileCurve};
use pedrisk_core::predict::{PredictError, PredictionResult, Predictor, SCHEMA_VERSION};
use pedrisk_core::record::Sex;

use crate::client::FetchError;
use crate::state::AppState;

const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;
/// Percentiles drawn on the reference chart.
pub const CHART_PERCENTILES: [f64; 8] = [5.0, 10.0, 25.0, 50.0, 75.0, 85.0, 90.0, 95.0];

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/v1/predict", post(predict_posted))
        .route("/v1/patients/{id}/predict", get(predict_fetched))
        .route("/v1/model", get(model))
        .route("/v1/model/reload", post(reload))
        .route("/v1/reference/bmi-curves", get(bmi_curves))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    let mut app = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/smart/launch", get(smart_launch))
        .merge(protected);
    if let Some(dir) = &state.config().ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

/// JSON error body: a stable `error` code plus a human-readable message.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
    /// Correlation id for internal errors; details go to the server log only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
                detail: None,
                id: None,
            },
        }
    }

    fn internal(err: &dyn std::fmt::Display) -> Self {
        let id = uuid::Uuid::new_v4().simple().to_string();
        tracing::error!(error_id = %id, "internal error: {err}");
        let mut e = Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error");
        e.body.id = Some(id);
        e
    }

    fn no_model() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "no_model", "no model is loaded")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(self.body)).into_response()
    }
}

impl From<PredictError> for ApiError {
    fn from(err: PredictError) -> Self {
        match err {
            PredictError::Fhir(e) => Self::new(StatusCode::BAD_REQUEST, "invalid_fhir", e.to_string()),
            PredictError::Ineligible(reason) => {
                let mut e = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "ineligible", reason.to_string());
                e.body.detail = serde_json::to_value(reason).ok();
                e
            }
            other => Self::internal(&other),
        }
    }
}

impl From<FetchError> for ApiError {
    fn from(err: FetchError) -> Self {
        match err {
            FetchError::InvalidRequest(m) => Self::new(StatusCode::BAD_REQUEST, "invalid_request", m),
            FetchError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "patient_not_found", err.to_string()),
            FetchError::Unauthorized(code) => Self::new(
                StatusCode::from_u16(code).unwrap_or(StatusCode::FORBIDDEN),
                "upstream_unauthorized",
                err.to_string(),
            ),
            FetchError::Fhir(e) => PredictError::Fhir(e).into(),
            FetchError::Transport(_)
            | FetchError::PaginationLoop(_)
            | FetchError::Upstream { .. }
            | FetchError::BadPage(_) => Self::new(StatusCode::BAD_GATEWAY, "upstream", err.to_string()),
        }
    }
}

/// The canonical result bytes, identical to `pedrisk predict` output.
fn result_response(result: &PredictionResult) -> Response {
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        result.to_json(),
    )
        .into_response()
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let Some(expected) = state.config().token.as_deref() else {
        return next.run(req).await;
    };
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented.is_some_and(|t| constant_time_eq(t.as_bytes(), expected.as_bytes())) {
        next.run(req).await
    } else {
        let mut resp = ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token").into_response();
        resp.headers_mut()
            .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        resp
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn loaded(state: &AppState) -> Result<Arc<Predictor>, ApiError> {
    state.predictor().ok_or_else(ApiError::no_model)
}

async fn predict_posted(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let predictor = loaded(&state)?;
    let result = tokio::task::spawn_blocking(move || predictor.predict_bundle(&body))
        .await
        .map_err(|e| ApiError::internal(&e))??;
    Ok(result_response(&result))
}

#[derive(Debug, Deserialize)]
pub struct FetchParams {
    pub server: Option<String>,
}

async fn predict_fetched(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<FetchParams>,
) -> Result<Response, ApiError> {
    let predictor = loaded(&state)?;
    let server = params
        .server
        .or_else(|| state.config().fhir_server.clone())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", "no `server` given and none configured"))?;
    let set = state
        .client()
        .fetch_patient_everything(&server, &id, state.config().fhir_token.as_deref())
        .await?;
    let result = tokio::task::spawn_blocking(move || predictor.predict_resources(&set))
        .await
        .map_err(|e| ApiError::internal(&e))??;
    Ok(result_response(&result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub schema_version: String,
    pub model_version: Option<String>,
}

async fn health(State(state): State<Arc<AppState>>) -> axum::Json<Health> {
    let version = state.predictor().map(|p| p.model_version().to_string());
    axum::Json(Health {
        status: if version.is_some() { "ok" } else { "degraded" }.into(),
        schema_version: SCHEMA_VERSION.into(),
        model_version: version,
    })
}

async fn model(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    Ok(axum::Json(loaded(&state)?.summary()).into_response())
}

async fn reload(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let s = state.clone();
    let version = tokio::task::spawn_blocking(move || s.reload())
        .await
        .map_err(|e| ApiError::internal(&e))?
        .map_err(|e| ApiError::internal(&e))?;
    Ok(axum::Json(json!({ "status": "reloaded", "model_version": version })).into_response())
}

async fn bmi_curves(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let predictor = loaded(&state)?;
    let mut out: BTreeMap<&str, Vec<PercentileCurve>> = BTreeMap::new();
    for (name, sex) in [("female", Sex::Female), ("male", Sex::Male)] {
        let curves = percentile_curves(predictor.growth_table(), Metric::BmiForAge, sex, &CHART_PERCENTILES)
            .map_err(|e| ApiError::internal(&e))?;
        out.insert(name, curves);
    }
    Ok(axum::Json(out).into_response())
}

async fn smart_launch() -> ApiError {
    ApiError::new(StatusCode::NOT_IMPLEMENTED, "not_implemented", "SMART on FHIR launch is not implemented")
}
