use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("no annotation blocks left")]
    NoBlocksAvailable,
    #[error("unknown session {0}")]
    SessionNotFound(String),
    #[error("item {item} is not part of session {session}")]
    ItemNotInSession { item: String, session: String },
    #[error("item {0} was already answered")]
    AlreadyAnswered(String),
    #[error("{got} marks for {expected} tokens")]
    LengthMismatch { got: usize, expected: usize },
    #[error("no {condition} correction to review for {target}")]
    NothingToReview { condition: String, target: String },
    #[error("{0}")]
    InvalidRequest(String),
    #[error("no such endpoint")]
    UnknownEndpoint,
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NoBlocksAvailable => "no_blocks_available",
            ServiceError::SessionNotFound(_) => "session_not_found",
            ServiceError::ItemNotInSession { .. } => "item_not_in_session",
            ServiceError::AlreadyAnswered(_) => "already_answered",
            ServiceError::LengthMismatch { .. } => "length_mismatch",
            ServiceError::NothingToReview { .. } => "nothing_to_review",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::UnknownEndpoint => "not_found",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NoBlocksAvailable | ServiceError::AlreadyAnswered(_) => StatusCode::CONFLICT,
            ServiceError::SessionNotFound(_) | ServiceError::NothingToReview { .. } | ServiceError::UnknownEndpoint => StatusCode::NOT_FOUND,
            ServiceError::ItemNotInSession { .. } | ServiceError::LengthMismatch { .. } | ServiceError::InvalidRequest(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), axum::Json(ErrorBody { code: self.code(), message: self.to_string() })).into_response()
    }
}
