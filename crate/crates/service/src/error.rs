use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Error returned by a handler, rendered as `{"error": code, "detail": text}`.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{what} {id:?} not found")]
    NotFound { what: &'static str, id: String },

    #[error("axis {axis_id} was created for version {axis_version} of collection {collection_id}, which is now at version {current}")]
    StaleAxis {
        axis_id: String,
        collection_id: String,
        axis_version: u64,
        current: u64,
    },

    #[error("{0}")]
    BadRequest(String),

    #[error(transparent)]
    Core(#[from] rankaxis_core::Error),

    #[error("journal: {0}")]
    Journal(String),
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    detail: String,
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound { .. } => "NotFound",
            ApiError::StaleAxis { .. } => "StaleAxis",
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::Core(e) => e.code(),
            ApiError::Journal(_) => "JournalError",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound { .. } => StatusCode::NOT_FOUND,
            ApiError::StaleAxis { .. } => StatusCode::CONFLICT,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub(crate) fn not_found(what: &'static str, id: impl Into<String>) -> Self {
        ApiError::NotFound { what, id: id.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = Body {
            error: self.code(),
            detail: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
