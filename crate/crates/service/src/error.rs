use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// An error answered as `{"error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(what: &str, id: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} `{id}`"))
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.status.as_u16(), self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<sparsescene::scene::SceneError> for ApiError {
    fn from(e: sparsescene::scene::SceneError) -> Self {
        use sparsescene::scene::SceneError;
        match e {
            SceneError::NoSuchInstance(id) => Self::not_found("instance", id),
            other => Self::bad_request("invalid_scene", other.to_string()),
        }
    }
}

impl From<sparsescene::condkernel::KernelError> for ApiError {
    fn from(e: sparsescene::condkernel::KernelError) -> Self {
        Self::bad_request("invalid_input", e.to_string())
    }
}

impl From<sparsescene::preview::PreviewError> for ApiError {
    fn from(e: sparsescene::preview::PreviewError) -> Self {
        Self::bad_request("invalid_input", e.to_string())
    }
}

impl From<sparsescene::raster::RasterError> for ApiError {
    fn from(e: sparsescene::raster::RasterError) -> Self {
        Self::bad_request("raster", e.to_string())
    }
}

impl From<sparsescene::stylekit::StyleError> for ApiError {
    fn from(e: sparsescene::stylekit::StyleError) -> Self {
        Self::bad_request("style", e.to_string())
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

/// Parse a JSON body, mapping failures to `invalid_json`.
pub fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}
