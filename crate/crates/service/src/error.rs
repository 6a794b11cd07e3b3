use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use modkin::ValidationReport;
use serde::Serialize;

use crate::API_VERSION;

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error_code: String,
    pub message: String,
    pub field_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_report: Option<ValidationReport>,
}

impl ApiError {
    pub fn bad_request(code: &str, message: impl Into<String>, field_path: Option<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            error_code: code.to_string(),
            message: message.into(),
            field_path,
            validation_report: None,
        }
    }

    pub fn domain(err: modkin::Error, field_path: Option<&str>) -> Self {
        let validation_report = match &err {
            modkin::Error::Validation(report) => Some(report.clone()),
            _ => None,
        };
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            error_code: err.code().to_string(),
            message: err.to_string(),
            field_path: field_path.map(str::to_string),
            validation_report,
        }
    }

    pub fn internal() -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            error_code: "InternalError".into(),
            message: "internal error".into(),
            field_path: None,
            validation_report: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = serde_json::to_value(&self).expect("error serializes");
        body["version"] = API_VERSION.into();
        (self.status, Json(body)).into_response()
    }
}
