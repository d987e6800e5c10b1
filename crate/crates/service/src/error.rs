use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use revid_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Wire form of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidRequest", message)
    }

    pub fn unknown_gallery(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "UnknownGallery",
            format!("unknown gallery `{id}`"),
        )
        .with_detail(json!({ "gallery_id": id }))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DuplicateId(_) => StatusCode::CONFLICT,
            Error::UnknownRecord(_) => StatusCode::NOT_FOUND,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let detail = match &e {
            Error::DuplicateId(id) | Error::UnknownRecord(id) => json!({ "record_id": id }),
            Error::ModalityMismatch { expected, found } => {
                json!({ "expected": expected, "found": found })
            }
            Error::DimensionMismatch { expected, found } => {
                json!({ "expected": expected, "found": found })
            }
            Error::UnknownColourLabel(label) => json!({ "label": label }),
            Error::MissingProbeTemplate(m) => json!({ "modality": m }),
            Error::Line { line, .. } => json!({ "line": line }),
            _ => Value::Null,
        };
        ApiError::new(status, e.code(), e.to_string()).with_detail(detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
