use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown bounds `{0}`")]
    UnknownBounds(String),
    #[error("no human model is loaded")]
    NoHumanModel,
    /// Body or message failed to deserialize; the message names the field path.
    #[error("{0}")]
    InvalidBody(String),
    #[error("duplicate model id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Core(#[from] graspshare::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownModel(_) => "unknown_model",
            Self::UnknownBounds(_) => "unknown_bounds",
            Self::NoHumanModel => "no_human_model",
            Self::InvalidBody(_) => "invalid_body",
            Self::DuplicateId(_) => "duplicate_id",
            Self::Core(e) => e.kind(),
            Self::Io { .. } => "io",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::UnknownModel(_) | Self::UnknownBounds(_) => StatusCode::NOT_FOUND,
            Self::Io { .. } | Self::DuplicateId(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

/// Error body returned by every HTTP endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

/// Deserializes JSON, reporting the path of the offending field.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ServiceError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            ServiceError::InvalidBody(e.inner().to_string())
        } else {
            ServiceError::InvalidBody(format!("{path}: {}", e.inner()))
        }
    })
}
