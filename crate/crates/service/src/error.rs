use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use psrom_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Machine-readable error codes carried in every error body.
pub mod code {
    pub const INVALID_JSON: &str = "invalid_json";
    pub const INVALID_QUERY: &str = "invalid_query";
    pub const INVALID_TREE: &str = "invalid_tree";
    pub const INVALID_BOUNDARY_CONDITIONS: &str = "invalid_boundary_conditions";
    pub const BUILD_FAILED: &str = "build_failed";
    pub const UNKNOWN_MODEL: &str = "unknown_model";
    pub const UNKNOWN_PATH: &str = "unknown_path";
    pub const PLAN_OUTSIDE_ENVELOPE: &str = "plan_outside_envelope";
    pub const INVALID_PLAN: &str = "invalid_plan";
    pub const SOLVE_FAILED: &str = "solve_failed";
    pub const INTERNAL: &str = "internal";
}

/// Wire form: `{"error": {"code", "message", "detail"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn unknown_model(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code::UNKNOWN_MODEL, format!("no model with id {id}"))
            .with_detail(json!({ "model_id": id }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code::INTERNAL, message)
    }

    /// Classify an error raised while validating an uploaded tree.
    pub fn invalid_tree(e: CoreError) -> Self {
        let detail = match &e {
            CoreError::Cycle(ids) => json!({ "ids": ids }),
            CoreError::DanglingParent { id, parent } => json!({ "ids": [id, parent] }),
            CoreError::NotTopological { id, parent } => json!({ "ids": [id, parent] }),
            CoreError::TooManyChildren { id, .. }
            | CoreError::OutletFlag { id, .. }
            | CoreError::NonPositive { id, .. } => json!({ "ids": [id] }),
            CoreError::NonDenseIds { found, .. } => json!({ "ids": [found] }),
            _ => Value::Null,
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code::INVALID_TREE, e.to_string()).with_detail(detail)
    }

    pub fn invalid_boundary_conditions(e: CoreError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code::INVALID_BOUNDARY_CONDITIONS, e.to_string())
    }

    /// Classify an error raised while building a surface.
    pub fn build_failed(e: CoreError) -> Self {
        let detail = match &e {
            CoreError::NotConverged { label, iterations } => {
                json!({ "configuration": label, "iterations": iterations })
            }
            _ => Value::Null,
        };
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code::BUILD_FAILED, e.to_string()).with_detail(detail)
    }

    /// Classify an error raised while applying or solving a plan.
    pub fn plan(e: CoreError) -> Self {
        let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
        match &e {
            CoreError::InvalidInterval { index, .. } => {
                ApiError::new(unprocessable, code::PLAN_OUTSIDE_ENVELOPE, e.to_string())
                    .with_detail(json!({ "interval": index }))
            }
            CoreError::OutsideEnvelope { id, .. } => {
                ApiError::new(unprocessable, code::PLAN_OUTSIDE_ENVELOPE, e.to_string())
                    .with_detail(json!({ "point": id }))
            }
            CoreError::UnknownPath(path) => {
                ApiError::new(unprocessable, code::UNKNOWN_PATH, e.to_string()).with_detail(json!({ "path": path }))
            }
            CoreError::ConflictingIntervals { id, .. } => {
                ApiError::new(unprocessable, code::INVALID_PLAN, e.to_string()).with_detail(json!({ "point": id }))
            }
            CoreError::InvalidParameter { name, .. } => ApiError::new(unprocessable, code::INVALID_PLAN, e.to_string())
                .with_detail(json!({ "parameter": name })),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code::SOLVE_FAILED, e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError::new(rejection.status(), code::INVALID_JSON, rejection.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(rejection: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code::INVALID_QUERY, rejection.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code.to_string(), message: self.message, detail: self.detail };
        (self.status, Json(json!({ "error": body }))).into_response()
    }
}
