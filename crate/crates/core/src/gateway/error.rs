use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use super::share::ShareError;
use crate::at::AtError;
use crate::call::CallError;
use crate::mms::MmsError;
use crate::services::ServiceError;

/// An error response: status code plus `{"error": code, "message": text}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or invalid bearer token",
        )
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(d) = self.detail {
            body["detail"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use ServiceError::*;
        let msg = e.to_string();
        match e {
            NotReady(_) | SimPinRequired | SimPuk | InitFailed(_) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "modem_not_ready", msg)
            }
            Unavailable(_) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "service_unavailable", msg)
            }
            InvalidArgument(_) | TextTooLong | Sms(_) => Self::bad_request(msg),
            InvalidIndex => Self::not_found(msg),
            StorageFull => Self::new(StatusCode::INSUFFICIENT_STORAGE, "storage_full", msg),
            Cms(_) | Cme(_) | CommandFailed(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "modem_error", msg)
            }
            SendFailed(report) => Self::new(StatusCode::BAD_GATEWAY, "send_failed", msg)
                .with_detail(serde_json::to_value(report).unwrap_or_default()),
            At(a) => a.into(),
        }
    }
}

impl From<AtError> for ApiError {
    fn from(e: AtError) -> Self {
        let msg = e.to_string();
        match e {
            AtError::InvalidArgument(_) => Self::bad_request(msg),
            AtError::Timeout(_) => Self::new(StatusCode::GATEWAY_TIMEOUT, "modem_timeout", msg),
            AtError::TransportClosed | AtError::Unsupported(_) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "modem_unavailable", msg)
            }
            AtError::PromptNeverArrived => Self::new(StatusCode::BAD_GATEWAY, "modem_error", msg),
        }
    }
}

impl From<CallError> for ApiError {
    fn from(e: CallError) -> Self {
        use CallError::*;
        let msg = e.to_string();
        match e {
            InvalidState { .. } | Busy | AudioInUse => Self::conflict(msg),
            NotFound(_) => Self::not_found(msg),
            InvalidNumber(_) => Self::bad_request(msg),
            Modem(_) | Audio(_) => Self::new(StatusCode::BAD_GATEWAY, "modem_error", msg),
            AudioUnavailable => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "audio_unavailable", msg)
            }
        }
    }
}

impl From<MmsError> for ApiError {
    fn from(e: MmsError) -> Self {
        use MmsError::*;
        let msg = e.to_string();
        match e {
            UnknownTransaction(_) => Self::not_found(msg),
            InvalidState { .. } => Self::conflict(msg),
            Http(_) | ContentLocationGone => Self::new(StatusCode::BAD_GATEWAY, "mmsc_error", msg),
            Truncated
            | UnknownMessageType(_)
            | MissingHeader(_)
            | Malformed(_)
            | UnexpectedType { .. }
            | InvalidRequest(_) => Self::bad_request(msg),
        }
    }
}

impl From<ShareError> for ApiError {
    fn from(e: ShareError) -> Self {
        let msg = e.to_string();
        match e {
            ShareError::InvalidPath(_) | ShareError::InvalidOwner(_) => Self::bad_request(msg),
            ShareError::NotFound => Self::not_found(msg),
            ShareError::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", msg),
        }
    }
}
