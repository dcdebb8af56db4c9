use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use riarit_core::SessionError;
use serde::Serialize;

use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("storage failure: {0}")]
    Storage(#[from] StoreError),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::UnknownScenario(_) => "unknown_scenario",
            ApiError::Session(e) => match e {
                SessionError::Finished(_) => "session_finished",
                SessionError::ExerciseOutstanding => "exercise_outstanding",
                SessionError::NoOutstandingExercise => "no_outstanding_exercise",
                SessionError::UnexpectedTrial { .. } => "unexpected_trial",
                SessionError::Exercise(_) => "invalid_answer",
                _ => "internal",
            },
            ApiError::Storage(_) => "storage",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::UnknownScenario(_) => StatusCode::BAD_REQUEST,
            ApiError::Session(e) => match e {
                SessionError::Finished(_)
                | SessionError::ExerciseOutstanding
                | SessionError::NoOutstandingExercise
                | SessionError::UnexpectedTrial { .. } => StatusCode::CONFLICT,
                SessionError::Exercise(_) => StatusCode::BAD_REQUEST,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ApiError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = ErrorBody {
            error: self.code(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}
