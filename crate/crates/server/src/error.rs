use axum::extract::{FromRequest, Request};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use codecoach::validation::{FieldError, FieldErrors};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// JSON error body: `{"error": ..., "fields": [{"path", "message"}]}`.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{status}: {error}")]
pub struct ApiError {
    pub status: StatusCode,
    pub error: String,
    pub fields: Vec<FieldError>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    fields: &'a [FieldError],
}

impl ApiError {
    pub fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError { status, error: error.into(), fields: Vec::new() }
    }

    pub fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "missing or unknown bearer token")
    }

    pub fn forbidden(why: &str) -> Self {
        Self::new(StatusCode::FORBIDDEN, why)
    }

    pub fn too_large(message: impl Into<String>) -> Self {
        Self::new(StatusCode::PAYLOAD_TOO_LARGE, message)
    }

    /// 422 listing each rejected field. Messages are scrubbed of quoted
    /// input so a body is never echoed back.
    pub fn invalid(errors: FieldErrors) -> Self {
        let fields = errors.0.into_iter().map(|e| FieldError::new(e.path, scrub(&e.message))).collect();
        ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, error: "validation failed".into(), fields }
    }

    pub fn invalid_field(path: impl Into<String>, message: impl Into<String>) -> Self {
        let mut e = FieldErrors::default();
        e.push(path, message);
        Self::invalid(e)
    }

    pub fn internal(err: impl std::fmt::Display) -> Self {
        tracing::error!(error = %err, "request failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.error, fields: &self.fields })).into_response()
    }
}

/// Replaces quoted fragments of a parser message unless they look like a
/// schema name (a short lowercase identifier).
pub fn scrub(message: &str) -> String {
    let mut out = String::with_capacity(message.len());
    let mut rest = message;
    while let Some(open) = rest.find(['"', '`']) {
        let quote = rest[open..].chars().next().unwrap_or('"');
        out.push_str(&rest[..=open]);
        let body = &rest[open + 1..];
        let Some(close) = body.find(quote) else {
            out.push_str("...");
            return out;
        };
        let inner = &body[..close];
        if is_schema_name(inner) {
            out.push_str(inner);
        } else {
            out.push_str("...");
        }
        out.push(quote);
        rest = &body[close + 1..];
    }
    out.push_str(rest);
    out
}

fn is_schema_name(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 32
        && s.starts_with(|c: char| c.is_ascii_lowercase() || c == '_')
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// JSON request body with path-addressed 422 errors. Syntax errors are 400.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = axum::body::Bytes::from_request(req, state).await.map_err(|e| ApiError::new(e.status(), "unreadable request body"))?;
        parse_json(&bytes).map(Body)
    }
}

pub fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        if inner.is_syntax() || inner.is_eof() || inner.is_io() {
            return malformed(inner);
        }
        let path = e.path().to_string();
        let path = if path == "." { "body".to_string() } else { path };
        // serde_json appends the location; it is noise next to the path
        let message = inner.to_string();
        let message = message.split(" at line ").next().unwrap_or(&message).to_string();
        ApiError::invalid_field(path, message)
    })?;
    de.end().map_err(|e| malformed(&e))?;
    Ok(value)
}

fn malformed(e: &serde_json::Error) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, format!("malformed JSON at line {} column {}", e.line(), e.column()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scrub_keeps_schema_names_only() {
        assert_eq!(scrub("invalid type: string \"SECRET 42\", expected u32"), "invalid type: string \"...\", expected u32");
        assert_eq!(
            scrub("unknown variant `Planing!`, expected one of `planning`, `program_creation`"),
            "unknown variant `...`, expected one of `planning`, `program_creation`"
        );
        assert_eq!(scrub("dangling \"quote"), "dangling \"...");
        assert_eq!(scrub("no quotes"), "no quotes");
    }

    #[derive(Debug, serde::Deserialize)]
    #[allow(dead_code)]
    struct Probe {
        n: u32,
        inner: Vec<Inner>,
    }

    #[derive(Debug, serde::Deserialize)]
    #[allow(dead_code)]
    struct Inner {
        name: String,
    }

    #[test]
    fn parse_errors_carry_paths() {
        let e = parse_json::<Probe>(br#"{"n": 1, "inner": [{"name": 5}]}"#).unwrap_err();
        assert_eq!(e.status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(e.fields[0].path, "inner[0].name");
        let e = parse_json::<Probe>(b"{\"n\": ").unwrap_err();
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        let e = parse_json::<Probe>(br#"{"n": "hidden-value", "inner": []}"#).unwrap_err();
        assert!(!format!("{:?}", e.fields).contains("hidden-value"));
        assert!(parse_json::<Probe>(br#"{"n": 1, "inner": []} trailing"#).is_err());
    }
}
