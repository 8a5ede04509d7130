//! Planning service: upload a centerline tree once, then evaluate virtual
//! interventions against its response surface in milliseconds.
//!
//! Endpoints (JSON bodies, errors as `{"error": {"code", "message", "detail"}}`):
//!
//! - `POST /models`: build a model from a tree document
//! - `GET /models/{id}/lesions`: detected lesions with suggested plans
//! - `POST /models/{id}/evaluate`: solve a modification plan
//! - `GET /models/{id}/traces?path=N`: anchor FFR along one or all paths
//! - `DELETE /models/{id}`

pub mod error;
pub mod model;
pub mod routes;
pub mod store;

pub use error::{ApiError, ErrorBody};
pub use model::{BuildConfig, BuildSummary, CreateModelRequest, EvaluateRequest, EvaluateResponse, ModelSession};
pub use routes::{router, AppState};
pub use store::ModelStore;
