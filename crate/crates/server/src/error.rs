use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use disentangle_core::Error;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("bad config: {0}")]
    Parse(String),
    #[error("bad value for {0}: {1}")]
    Env(String, String),
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Engine(#[from] Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("startup task failed: {0}")]
    Join(#[from] tokio::task::JoinError),
}

/// Error body: `{"error": {"kind": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: Detail<'a>,
}

#[derive(Serialize)]
struct Detail<'a> {
    kind: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::Argument(_) => (StatusCode::BAD_REQUEST, "argument"),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            Error::State(_) => (StatusCode::CONFLICT, "state"),
            Error::Structural(_) => (StatusCode::UNPROCESSABLE_ENTITY, "structural"),
            Error::Numeric(_) => (StatusCode::UNPROCESSABLE_ENTITY, "numeric"),
            Error::UnsupportedVersion { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unsupported_version"),
            Error::InvalidReference(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_reference"),
            Error::Load { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "load"),
            Error::Plugin(_) => (StatusCode::BAD_GATEWAY, "plugin"),
            Error::Sample { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        // state errors already read as instructions ("select at least one positive example")
        let message = match e {
            Error::State(m) => m,
            other => other.to_string(),
        };
        Self::new(status, kind, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: Detail {
                kind: self.kind,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}
