//! The JSON error envelope `{code, message, detail}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

use errslice_core::clustering::ClusteringError;
use errslice_core::io::IngestError;
use errslice_core::labeling::ClientError;
use errslice_core::slicing::SlicingError;
use errslice_core::store::StoreError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
            detail: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        match &e {
            IngestError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ApiError::not_found("dataset_not_found", e.to_string())
            }
            IngestError::Io { .. } => ApiError::bad_request(e.to_string()),
            IngestError::Parse { line, reason } => ApiError::new(StatusCode::BAD_REQUEST, "parse_error", e.to_string())
                .with_detail(json!({ "line": line, "reason": reason })),
            IngestError::Validation(v) => {
                let list: Vec<String> = v.iter().map(ToString::to_string).collect();
                ApiError::new(StatusCode::BAD_REQUEST, "validation_error", e.to_string()).with_detail(json!(list))
            }
            IngestError::EmptyDataset => ApiError::new(StatusCode::BAD_REQUEST, "empty_dataset", e.to_string()),
        }
    }
}

impl From<SlicingError> for ApiError {
    fn from(e: SlicingError) -> Self {
        match e {
            SlicingError::InvalidQuantile(_) => ApiError::unprocessable("invalid_quantile", e.to_string()),
            SlicingError::EmptyDataset => ApiError::unprocessable("empty_dataset", e.to_string()),
        }
    }
}

impl From<ClusteringError> for ApiError {
    fn from(e: ClusteringError) -> Self {
        ApiError::unprocessable("clustering_error", e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::not_found("run_not_found", e.to_string()),
            StoreError::InvalidRunId(_) => ApiError::not_found("run_not_found", e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl From<ClientError> for ApiError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Config(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "labeler_unavailable", e.to_string()),
            _ => ApiError::new(StatusCode::BAD_GATEWAY, "labeler_failed", e.to_string()),
        }
    }
}
