//! HTTP front end for interactive sessions.
//!
//! | method | path                    | body               | response        |
//! |--------|-------------------------|--------------------|-----------------|
//! | POST   | `/sessions`             | `CreateRequest`?   | `SessionView`   |
//! | GET    | `/sessions/{id}`        |                    | `SessionView`   |
//! | POST   | `/sessions/{id}/step`   | `{"action": "up"}` | `StepOutcome`   |
//! | POST   | `/sessions/{id}/commit` |                    | `SessionView`   |
//! | GET    | `/sessions/{id}/result` |                    | `SessionResult` |
//!
//! Errors are `{"error": "..."}` with status 400 (bad request or config),
//! 404 (unknown session), 409 (wrong session state) or 500.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use edirl::domains::Action;
use edirl::error::Error;
use edirl::session::{CreateRequest, SessionResult, SessionStore, SessionView, StepOutcome};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

#[derive(Debug)]
pub struct ApiError(Error);

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match &self.0 {
            Error::UnknownSession(_) => StatusCode::NOT_FOUND,
            Error::SessionState(_) => StatusCode::CONFLICT,
            Error::Config(_) | Error::InvalidArgument(_) | Error::Layout(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Deserialize)]
pub struct StepRequest {
    pub action: String,
}

/// Runs a store operation off the async workers; commits sample a posterior.
async fn blocking<T, F>(store: Arc<SessionStore>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> edirl::error::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError(Error::InvalidModel(format!("worker failed: {e}"))))?
        .map(Json)
        .map_err(ApiError)
}

fn bad_json(e: serde_json::Error) -> ApiError {
    ApiError(Error::InvalidArgument(format!("request body: {e}")))
}

async fn create(State(store): State<Arc<SessionStore>>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(bad_json)?
    };
    let view = blocking(store, move |s| s.create(request)).await?;
    Ok((StatusCode::CREATED, view).into_response())
}

async fn state(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    blocking(store, move |s| s.get(&id)).await
}

async fn step(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<StepOutcome> {
    let request: StepRequest = serde_json::from_slice(&body).map_err(bad_json)?;
    let action: Action = request.action.parse()?;
    blocking(store, move |s| s.step(&id, action)).await
}

async fn commit(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    blocking(store, move |s| s.commit(&id)).await
}

async fn result(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<SessionResult> {
    blocking(store, move |s| s.result(&id)).await
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/commit", post(commit))
        .route("/sessions/{id}/result", get(result))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, store: SessionStore) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
