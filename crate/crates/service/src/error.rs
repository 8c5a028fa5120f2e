use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use viscot_core::session::{SessionError, StoreError};
use viscot_core::{BackendError, GraphError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    NodeNotFound,
    InvalidParent,
    SessionClosed,
    SessionNotFound,
    FixtureMiss,
    BackendUnreachable,
    NoAnswer,
    Validation,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NodeNotFound | ErrorCode::SessionNotFound => StatusCode::NOT_FOUND,
            ErrorCode::InvalidParent | ErrorCode::Validation => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::SessionClosed | ErrorCode::NoAnswer => StatusCode::CONFLICT,
            ErrorCode::FixtureMiss | ErrorCode::BackendUnreachable => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error body: `{"code": "...", "message": "...", "status": 404}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub status: u16,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), status: code.status().as_u16() }
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(ErrorCode::SessionNotFound, format!("no session {id}"))
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        let code = match e {
            GraphError::NodeNotFound(_) => ErrorCode::NodeNotFound,
            GraphError::InvalidParent(_) => ErrorCode::InvalidParent,
            GraphError::NoAnswer => ErrorCode::NoAnswer,
            GraphError::FlaggedTarget(_) | GraphError::EmptyText | GraphError::EmptyChain | GraphError::NotEmpty => {
                ErrorCode::Validation
            }
        };
        Self::new(code, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Graph(g) => return g.clone().into(),
            SessionError::EmptyQuery | SessionError::NoFrontier => ErrorCode::Validation,
            SessionError::SessionClosed => ErrorCode::SessionClosed,
            SessionError::NoAnswer => ErrorCode::NoAnswer,
            SessionError::Backend(BackendError::FixtureMiss { .. }) => ErrorCode::FixtureMiss,
            SessionError::Backend(BackendError::InvalidRequest(_)) | SessionError::MalformedLog(_) => {
                ErrorCode::Internal
            }
            SessionError::Backend(_) | SessionError::ParseEmpty | SessionError::Parse(_) => {
                ErrorCode::BackendUnreachable
            }
        };
        Self::new(code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(ErrorCode::Internal, format!("persisting session: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}
