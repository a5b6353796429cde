use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use infernet::strategies::StrategyError;
use infernet::NodeId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error("session closed")]
    SessionClosed,
    #[error("{0} is already observed")]
    AlreadyObserved(NodeId),
    #[error("{0}")]
    BadRequest(String),
    #[error("store: {0}")]
    Store(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Invalid(_) => "invalid",
            ServiceError::SessionClosed => "session_closed",
            ServiceError::AlreadyObserved(_) => "already_observed",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Store(_) => "store",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::SessionClosed | ServiceError::AlreadyObserved(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_owned(),
            message: self.to_string(),
        }
    }
}

impl From<StrategyError> for ServiceError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::NotActive => ServiceError::SessionClosed,
            StrategyError::AlreadyObserved(id) => ServiceError::AlreadyObserved(id),
            StrategyError::DepthVector(_)
            | StrategyError::FlatDepthVector(..)
            | StrategyError::UnknownTarget(_) => ServiceError::Invalid(e.to_string()),
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Store(e.to_string())
    }
}

/// Wire form of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
