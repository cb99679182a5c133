use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pic_core::PicError;
use serde_json::json;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

fn status_for(err: &PicError) -> StatusCode {
    match err {
        PicError::Batch { source, .. } => status_for(source),
        PicError::EmptyInput(_) | PicError::VariantMismatch(_) => StatusCode::UNPROCESSABLE_ENTITY,
        PicError::Capacity(_) => StatusCode::PAYLOAD_TOO_LARGE,
        PicError::MissingCache(_) => StatusCode::NOT_FOUND,
        PicError::FingerprintMismatch { .. } | PicError::Shape(_) => StatusCode::CONFLICT,
        PicError::InvalidAlgorithm(_) | PicError::InvalidChunkSpec(_) | PicError::OutOfRange { .. } => {
            StatusCode::BAD_REQUEST
        }
        PicError::Config(_) | PicError::Layout(_) | PicError::Format { .. } | PicError::Io(_) => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl From<PicError> for ApiError {
    fn from(err: PicError) -> Self {
        Self { status: status_for(&err), message: err.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}
