use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use psrom_core::SolverConfig;
use serde::Deserialize;

use crate::error::ApiError;
use crate::model::{BuildConfig, BuildInput, CreateModelRequest, EvaluateRequest};
use crate::store::ModelStore;

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 32 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<ModelStore>,
    pub build: BuildConfig,
    pub solver: SolverConfig,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/models", post(create_model))
        .route("/models/{id}", axum::routing::delete(delete_model))
        .route("/models/{id}/lesions", get(list_lesions))
        .route("/models/{id}/evaluate", post(evaluate))
        .route("/models/{id}/traces", get(traces))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn create_model(
    State(state): State<AppState>,
    body: Result<Json<CreateModelRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(request) = body?;
    let input = BuildInput::from_request(request, state.build)?;
    let (session, built) = state.store.get_or_build(input).await?;
    let status = if built { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(session.summary(built))))
}

async fn list_lesions(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.store.get(&id).await?.lesion_report()))
}

async fn evaluate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<EvaluateRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let session = state.store.get(&id).await?;
    let Json(request) = body?;
    Ok(Json(session.evaluate(&request, &state.solver)?))
}

#[derive(Debug, Deserialize)]
struct TraceQuery {
    path: Option<usize>,
}

async fn traces(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<TraceQuery>, QueryRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Query(query) = query?;
    Ok(Json(state.store.get(&id).await?.anchor_traces(query.path)?))
}

async fn delete_model(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    if state.store.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::unknown_model(&id))
    }
}
