//! HTTP handlers.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::Mutex;

use lode_core::session::{CanvasStack, EditCommand};
use lode_core::{downscale_nearest, Error};

use crate::state::{now_millis, AppState, SessionRecord};
use crate::wire::{
    EditRequest, ErrorBody, GridWire, HealthResponse, ModelInfoResponse, PersistenceRequest,
    ScaleRequest, ScaleResponse, SessionResponse,
};

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: self.message,
            }),
        )
            .into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Model(_) => StatusCode::SERVICE_UNAVAILABLE,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn api_router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/model/info", get(model_info))
        .route("/session", post(create_session))
        .route("/session/{id}", get(get_session))
        .route("/session/{id}/edit", post(edit))
        .route("/session/{id}/persistence", post(persistence))
        .route("/scale/up", post(scale_up))
        .route("/scale/down", post(scale_down))
        .with_state(state)
}

async fn health(State(state): State<Shared>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        models_loaded: state.models_loaded(),
        sessions: state.sessions.read().await.len(),
    })
}

async fn model_info(State(state): State<Shared>) -> Json<ModelInfoResponse> {
    Json(ModelInfoResponse {
        models: state.model_slots.clone(),
    })
}

fn require_models(state: &AppState) -> ApiResult<()> {
    match &state.model_error {
        Some(e) => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.clone())),
        None => Ok(()),
    }
}

async fn session(state: &AppState, id: &str) -> ApiResult<Arc<Mutex<SessionRecord>>> {
    state
        .sessions
        .read()
        .await
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
}

async fn create_session(
    State(state): State<Shared>,
) -> ApiResult<(StatusCode, Json<SessionResponse>)> {
    require_models(&state)?;
    let id = uuid::Uuid::new_v4().to_string();
    let now = now_millis();
    let record = SessionRecord {
        stack: CanvasStack::new(),
        created_at: now,
        last_modified: now,
    };
    let response = record.response(&id);
    state
        .sessions
        .write()
        .await
        .insert(id, Arc::new(Mutex::new(record)));
    Ok((StatusCode::CREATED, Json(response)))
}

async fn get_session(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionResponse>> {
    let record = session(&state, &id).await?;
    let guard = record.lock().await;
    Ok(Json(guard.response(&id)))
}

async fn edit(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<EditRequest>, JsonRejection>,
) -> ApiResult<Json<SessionResponse>> {
    let record = session(&state, &id).await?;
    let Json(req) = body?;
    let mut chars = req.tile.chars();
    let glyph = match (chars.next(), chars.next()) {
        (Some(c), None) => c,
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "tile must be a single glyph",
            ))
        }
    };
    let mut guard = record.lock().await;
    let command = EditCommand::Draw {
        canvas: req.canvas,
        x: req.x,
        y: req.y,
        glyph,
    };
    guard.stack.apply(&state.scaler, &command)?;
    guard.last_modified = now_millis();
    Ok(Json(guard.response(&id)))
}

async fn persistence(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<PersistenceRequest>, JsonRejection>,
) -> ApiResult<Json<SessionResponse>> {
    let record = session(&state, &id).await?;
    let Json(req) = body?;
    let mut guard = record.lock().await;
    guard
        .stack
        .apply(&state.scaler, &EditCommand::Persistence { tick: req.tick })?;
    guard.last_modified = now_millis();
    Ok(Json(guard.response(&id)))
}

async fn scale_up(
    State(state): State<Shared>,
    body: Result<Json<ScaleRequest>, JsonRejection>,
) -> ApiResult<Json<ScaleResponse>> {
    let Json(req) = body?;
    let grid = req.grid.to_grid()?;
    let target = match (grid.width(), grid.height()) {
        (4, 4) => 1,
        (8, 8) => 2,
        (w, h) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("cannot upscale a {w}x{h} grid; accepted sizes: 4x4, 8x8"),
            ))
        }
    };
    let model = state.scaler.model_for(target)?;
    Ok(Json(ScaleResponse {
        grid: GridWire::from(&model.upscale(&grid)?),
    }))
}

async fn scale_down(
    body: Result<Json<ScaleRequest>, JsonRejection>,
) -> ApiResult<Json<ScaleResponse>> {
    let Json(req) = body?;
    let grid = req.grid.to_grid()?;
    match (grid.width(), grid.height()) {
        (8, 8) | (16, 16) => Ok(Json(ScaleResponse {
            grid: GridWire::from(&downscale_nearest(&grid)?),
        })),
        (w, h) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("cannot downscale a {w}x{h} grid; accepted sizes: 8x8, 16x16"),
        )),
    }
}
