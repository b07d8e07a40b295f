//! HTTP facade over a loaded model.
//!
//! | route                  | body                                       |
//! |------------------------|--------------------------------------------|
//! | `GET /model`           | none                                       |
//! | `POST /evaluate`       | `{"features": [..]}`                       |
//! | `POST /counterfactual` | `{"factual", "target", "free"?, "anneal"?, "success_margin"?}` |
//!
//! Every response carries the model's `feature_names`. Request bodies are
//! parsed by hand so malformed input is a 400 with a message naming the
//! offending field; an empty `free` list is a 422.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use countermachine_core::{
    find_counterfactual, AnnealConfig, Consequent, CounterfactualError, CounterfactualQuery,
    FeatureVector, FuzzyError, TskModel,
};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use tower_http::cors::CorsLayer;

#[derive(Debug, Clone)]
pub struct ServiceState {
    model: Arc<TskModel>,
    /// Search settings used for fields a request leaves out.
    anneal: AnnealConfig,
}

impl ServiceState {
    pub fn new(model: TskModel, anneal: AnnealConfig) -> Self {
        Self {
            model: Arc::new(model),
            anneal,
        }
    }
}

struct ApiError {
    status: StatusCode,
    field: Option<String>,
    message: String,
}

impl ApiError {
    fn bad(field: impl Into<Option<String>>, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.message, "field": self.field});
        (self.status, Json(body)).into_response()
    }
}

fn fuzzy_error(field: &str, e: FuzzyError) -> ApiError {
    let field = match e {
        FuzzyError::OutOfRange { index, .. } => format!("{field}[{index}]"),
        _ => field.to_owned(),
    };
    ApiError::bad(field, e.to_string())
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad(None, format!("invalid request body: {e}")))
}

fn with_names(state: &ServiceState, mut body: Map<String, Value>) -> Json<Value> {
    body.insert("feature_names".into(), json!(state.model.feature_names()));
    Json(Value::Object(body))
}

async fn model_info(State(state): State<ServiceState>) -> Json<Value> {
    let m = &state.model;
    let mut body = Map::new();
    body.insert("label_encoding".into(), json!(m.label_encoding()));
    body.insert("rule_count".into(), json!(m.rules().len()));
    body.insert("n_inputs".into(), json!(m.n_inputs()));
    with_names(&state, body)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    features: Vec<f64>,
}

fn features(model: &TskModel, field: &str, values: Vec<f64>) -> Result<FeatureVector, ApiError> {
    if values.len() != model.n_inputs() {
        return Err(ApiError::bad(
            field.to_owned(),
            format!("expected {} values, got {}", model.n_inputs(), values.len()),
        ));
    }
    FeatureVector::new(values).map_err(|e| fuzzy_error(field, e))
}

async fn evaluate(State(state): State<ServiceState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: EvaluateRequest = parse_body(&body)?;
    let x = features(&state.model, "features", req.features)?;
    let e = state.model.evaluate(&x).map_err(|e| fuzzy_error("features", e))?;
    let mut body = Map::new();
    body.insert("y".into(), json!(e.y));
    body.insert("class".into(), json!(state.model.label_encoding().classify(e.y)));
    body.insert("degenerate".into(), json!(e.degenerate));
    Ok(with_names(&state, body))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CounterfactualRequest {
    factual: Vec<f64>,
    target: Consequent,
    free: Option<Vec<String>>,
    anneal: Option<Map<String, Value>>,
    success_margin: Option<f64>,
}

/// Overlays the request's anneal fields on the server defaults.
fn anneal_config(defaults: &AnnealConfig, overrides: Option<Map<String, Value>>) -> Result<AnnealConfig, ApiError> {
    let Value::Object(mut merged) = json!(defaults) else {
        unreachable!("AnnealConfig serializes to an object")
    };
    merged.extend(overrides.unwrap_or_default());
    let cfg: AnnealConfig = serde_json::from_value(Value::Object(merged))
        .map_err(|e| ApiError::bad("anneal".to_owned(), e.to_string()))?;
    if cfg.max_evaluations > defaults.max_evaluations {
        return Err(ApiError::bad(
            "anneal.max_evaluations".to_owned(),
            format!("exceeds the server budget of {}", defaults.max_evaluations),
        ));
    }
    Ok(cfg)
}

fn free_mask(model: &TskModel, free: Option<Vec<String>>) -> Result<Vec<bool>, ApiError> {
    let names = model.feature_names();
    let Some(free) = free else {
        return Ok(vec![true; names.len()]);
    };
    let mut mask = vec![false; names.len()];
    for (i, name) in free.iter().enumerate() {
        let pos = names.iter().position(|n| n == name).ok_or_else(|| {
            ApiError::bad(format!("free[{i}]"), format!("unknown feature `{name}`"))
        })?;
        mask[pos] = true;
    }
    Ok(mask)
}

async fn counterfactual(
    State(state): State<ServiceState>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: CounterfactualRequest = parse_body(&body)?;
    let model = &state.model;
    let factual = features(model, "factual", req.factual)?;
    let free_mask = free_mask(model, req.free)?;
    if !free_mask.contains(&true) {
        return Err(ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            field: Some("free".into()),
            message: "no free variables: at least one feature must be allowed to change".into(),
        });
    }
    let mut query = CounterfactualQuery::new(factual, model.label_encoding().value_of(req.target));
    query.free_mask = free_mask;
    query.anneal = anneal_config(&state.anneal, req.anneal)?;
    if let Some(m) = req.success_margin {
        query.success_margin = m;
    }

    let model = Arc::clone(&state.model);
    let result = tokio::task::spawn_blocking(move || find_counterfactual(&model, &query))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            field: None,
            message: e.to_string(),
        })?
        .map_err(|e| match e {
            CounterfactualError::Anneal(_) => ApiError::bad("anneal".to_owned(), e.to_string()),
            CounterfactualError::InvalidMargin(_) => ApiError::bad("success_margin".to_owned(), e.to_string()),
            e => ApiError::bad(None, e.to_string()),
        })?;
    let Value::Object(body) = result_json(&result) else {
        unreachable!("results serialize to objects")
    };
    Ok(with_names(&state, body))
}

/// Result as JSON with the per-move trace dropped; the per-restart bests stay.
/// The full trace is available as CSV from the command line.
pub fn result_json(result: &countermachine_core::CounterfactualResult) -> Value {
    let mut v = json!(result);
    v["trace"]["records"] = json!([]);
    v
}

pub fn router(state: ServiceState, allow_origin: Option<HeaderValue>) -> Router {
    let app = Router::new()
        .route("/model", get(model_info))
        .route("/evaluate", post(evaluate))
        .route("/counterfactual", post(counterfactual))
        .with_state(state);
    match allow_origin {
        Some(origin) => app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        ),
        None => app,
    }
}

/// Binds `addr`, reports the bound address on stderr, and serves until
/// interrupted.
pub async fn serve(app: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
