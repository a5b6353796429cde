use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use infernet::{NodeId, StrategySpec};
use serde::Deserialize;
use tower_http::cors::CorsLayer;

use crate::error::ServiceError;
use crate::manager::SessionManager;
use crate::session::Observation;

type Shared = State<Arc<SessionManager>>;
type ApiResult<T> = Result<T, ServiceError>;

#[derive(Debug, Deserialize)]
struct CreateSession {
    network: String,
    #[serde(default = "default_strategy")]
    strategy: StrategySpec,
}

fn default_strategy() -> StrategySpec {
    StrategySpec::new(infernet::Mode::Grouped)
}

#[derive(Debug, Deserialize)]
struct WhatIfQuery {
    node: NodeId,
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    r.map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn register_network(State(m): Shared, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let info = m.register_network(&bytes)?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_networks(State(m): Shared) -> impl IntoResponse {
    Json(m.list_networks())
}

async fn create_session(
    State(m): Shared,
    req: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let req = body(req)?;
    let view = m.create_session(&req.network, req.strategy)?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(m): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.get_state(&id)?))
}

async fn observe(
    State(m): Shared,
    Path(id): Path<String>,
    req: Result<Json<Observation>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let obs = body(req)?;
    Ok(Json(m.observe(&id, obs)?))
}

async fn whatif(
    State(m): Shared,
    Path(id): Path<String>,
    q: Result<Query<WhatIfQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(q) = q.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    Ok(Json(m.whatif(&id, &q.node)?))
}

async fn close(State(m): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.close(&id)?))
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("no such route".into())
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/networks", post(register_network).get(list_networks))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/observe", post(observe))
        .route("/sessions/{id}/whatif", get(whatif))
        .route("/sessions/{id}/close", post(close))
        .fallback(fallback)
        .layer(CorsLayer::permissive())
        .with_state(manager)
}

/// Serves the API until ctrl-c.
pub async fn serve(manager: Arc<SessionManager>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
