//! HTTP JSON API over an [`Agent`].
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/v1/users` | | 201 `{user_id}` |
//! | POST | `/v1/users/{id}/partners` | `{role_label}` | 201 `{partner_id}` |
//! | POST | `/v1/users/{id}/interactions` | submission | cycle result |
//! | GET | `/v1/users/{id}/history?partner=` | | event summaries |
//! | GET | `/v1/users/{id}/interactions/{event}/analysis` | | stored cycle result |
//! | POST | `/v1/users/{id}/feedback` | feedback | `{thresholds}` |
//! | GET | `/v1/users/{id}/state` | | user state |
//! | GET | `/v1/meta/tactics` | | tactics and vocabularies |
//! | GET | `/healthz` | | `ok` |
//!
//! Errors are `{code, message, field?}` with code one of `validation` (400),
//! `not_found` (404), `conflict` (409), `schema` (422) or `internal` (500).
//! Error messages never echo submitted text.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use schemars::{JsonSchema, Schema};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentError, CycleResult, EventSummary, Feedback, LogSubmission, UserState};
use crate::graph::NodeId;
use crate::ontology::{EmotionTerm, TacticDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Validation,
    NotFound,
    Conflict,
    Schema,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            field: None,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code {
            ErrorCode::Validation => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Schema => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Validation { field, message } => ApiError {
                code: ErrorCode::Validation,
                message,
                field: Some(field),
            },
            AgentError::NotFound(m) => ApiError::new(ErrorCode::NotFound, m),
            AgentError::Conflict(m) => ApiError::new(ErrorCode::Conflict, m),
            AgentError::Internal(m) | AgentError::Io(m) => {
                tracing::error!(error = %m, "request failed");
                ApiError::new(ErrorCode::Internal, "internal error")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CreateUserResponse {
    pub user_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CreatePartnerRequest {
    pub role_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CreatePartnerResponse {
    pub partner_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FeedbackResponse {
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MetaResponse {
    pub tactics: Vec<TacticDef>,
    pub emotions: Vec<EmotionTerm>,
    pub cognitions: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct HistoryQuery {
    pub partner: Option<u64>,
}

/// Parses a JSON body, reporting the failing field path. Parser messages are
/// dropped because they can quote the offending input.
pub fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = match e.inner().classify() {
            serde_json::error::Category::Data => "value does not match the expected schema",
            _ => "malformed JSON body",
        };
        ApiError {
            code: ErrorCode::Schema,
            message: message.into(),
            field: (path != ".").then_some(path),
        }
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, AgentError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|_| ApiError::new(ErrorCode::Internal, "internal error"))?
        .map_err(ApiError::from)
}

type AppState = Arc<Agent>;

async fn create_user(State(agent): State<AppState>) -> Result<(StatusCode, Json<CreateUserResponse>), ApiError> {
    let user_id = blocking(move || agent.create_user()).await?;
    Ok((StatusCode::CREATED, Json(CreateUserResponse { user_id })))
}

async fn create_partner(
    State(agent): State<AppState>,
    Path(user): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<CreatePartnerResponse>), ApiError> {
    let req: CreatePartnerRequest = parse_body(&body)?;
    let partner_id = blocking(move || agent.add_partner(&user, &req.role_label)).await?;
    Ok((StatusCode::CREATED, Json(CreatePartnerResponse { partner_id })))
}

async fn post_interaction(
    State(agent): State<AppState>,
    Path(user): Path<String>,
    body: Bytes,
) -> Result<Json<CycleResult>, ApiError> {
    let submission: LogSubmission = parse_body(&body)?;
    Ok(Json(blocking(move || agent.run_cycle(&user, &submission)).await?))
}

async fn history(
    State(agent): State<AppState>,
    Path(user): Path<String>,
    Query(q): Query<HistoryQuery>,
) -> Result<Json<Vec<EventSummary>>, ApiError> {
    Ok(Json(blocking(move || agent.history(&user, q.partner.map(NodeId))).await?))
}

async fn analysis(
    State(agent): State<AppState>,
    Path((user, event)): Path<(String, String)>,
) -> Result<Json<CycleResult>, ApiError> {
    let event: u64 = event
        .parse()
        .map_err(|_| ApiError::new(ErrorCode::NotFound, "event not found"))?;
    Ok(Json(blocking(move || agent.stored_analysis(&user, NodeId(event))).await?))
}

async fn feedback(
    State(agent): State<AppState>,
    Path(user): Path<String>,
    body: Bytes,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let fb: Feedback = parse_body(&body)?;
    let state = blocking(move || agent.apply_feedback(&user, &fb)).await?;
    Ok(Json(FeedbackResponse {
        thresholds: state.thresholds,
    }))
}

async fn state(State(agent): State<AppState>, Path(user): Path<String>) -> Result<Json<UserState>, ApiError> {
    Ok(Json(blocking(move || agent.state(&user)).await?))
}

async fn meta(State(agent): State<AppState>) -> Json<MetaResponse> {
    let kg = &agent.config().kg;
    Json(MetaResponse {
        tactics: kg.tactics().to_vec(),
        emotions: kg.emotions().to_vec(),
        cognitions: kg.cognitions().to_vec(),
    })
}

async fn healthz() -> &'static str {
    "ok"
}

async fn fallback() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

pub fn router(agent: Arc<Agent>) -> Router {
    Router::new()
        .route("/v1/users", post(create_user))
        .route("/v1/users/{id}/partners", post(create_partner))
        .route("/v1/users/{id}/interactions", post(post_interaction))
        .route("/v1/users/{id}/history", get(history))
        .route("/v1/users/{id}/interactions/{event}/analysis", get(analysis))
        .route("/v1/users/{id}/feedback", post(feedback))
        .route("/v1/users/{id}/state", get(state))
        .route("/v1/meta/tactics", get(meta))
        .route("/healthz", get(healthz))
        .fallback(fallback)
        .with_state(agent)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(agent: Arc<Agent>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(agent))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Schemas of every request and response body.
pub fn wire_schemas() -> Vec<(&'static str, Schema)> {
    vec![
        ("CreateUserResponse", schemars::schema_for!(CreateUserResponse)),
        ("CreatePartnerRequest", schemars::schema_for!(CreatePartnerRequest)),
        ("CreatePartnerResponse", schemars::schema_for!(CreatePartnerResponse)),
        ("LogSubmission", schemars::schema_for!(LogSubmission)),
        ("CycleResult", schemars::schema_for!(CycleResult)),
        ("EventSummary", schemars::schema_for!(Vec<EventSummary>)),
        ("Feedback", schemars::schema_for!(Feedback)),
        ("FeedbackResponse", schemars::schema_for!(FeedbackResponse)),
        ("UserState", schemars::schema_for!(UserState)),
        ("MetaResponse", schemars::schema_for!(MetaResponse)),
        ("ApiError", schemars::schema_for!(ApiError)),
    ]
}

/// Field names that identify a person.
pub const PII_FIELD_NAMES: &[&str] = &[
    "first_name",
    "last_name",
    "full_name",
    "given_name",
    "family_name",
    "surname",
    "nickname",
    "username",
    "user_name",
    "partner_name",
    "real_name",
    "email",
    "email_address",
    "phone",
    "phone_number",
    "mobile",
    "address",
    "street",
    "postcode",
    "zip",
    "zip_code",
    "birthday",
    "birth_date",
    "date_of_birth",
    "dob",
    "ssn",
    "passport",
    "ip",
    "ip_address",
    "contact",
];

/// String formats that carry personal identifiers.
pub const PII_FORMATS: &[&str] = &["email", "idn-email", "ipv4", "ipv6", "phone"];

/// Every property name or string format in `schema` that the denylists
/// match, as `path: reason` lines.
pub fn pii_findings(schema: &Schema) -> Vec<String> {
    let mut out = Vec::new();
    walk(schema.as_value(), "$", &mut out);
    out
}

fn walk(v: &serde_json::Value, path: &str, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) => {
            if let Some(props) = map.get("properties").and_then(|p| p.as_object()) {
                for name in props.keys() {
                    let lower = name.to_lowercase();
                    if PII_FIELD_NAMES.contains(&lower.as_str()) {
                        out.push(format!("{path}.properties.{name}: personal field name"));
                    }
                }
            }
            if let Some(f) = map.get("format").and_then(|f| f.as_str()) {
                if PII_FORMATS.contains(&f) {
                    out.push(format!("{path}: personal format `{f}`"));
                }
            }
            for (k, child) in map {
                walk(child, &format!("{path}.{k}"), out);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                walk(child, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}
