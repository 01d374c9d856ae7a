use std::sync::Arc;

use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;

use crate::error::ApiError;
use crate::settings::Role;
use crate::state::AppState;

/// The authenticated client behind a request.
#[derive(Debug, Clone)]
pub struct Caller {
    pub role: Role,
    pub actor_id: String,
}

impl Caller {
    /// The actor a request acts for. Learners act only as themselves;
    /// instructors may name anyone.
    pub fn acting_as(&self, requested: Option<String>) -> Result<String, ApiError> {
        match (self.role, requested) {
            (_, None) => Ok(self.actor_id.clone()),
            (Role::Instructor, Some(a)) if !a.trim().is_empty() => Ok(a),
            (Role::Learner, Some(a)) if a == self.actor_id => Ok(a),
            (Role::Instructor, Some(_)) => Err(ApiError::invalid_field("actor_id", "must not be empty")),
            (Role::Learner, Some(_)) => Err(ApiError::forbidden("learners may only act as themselves")),
        }
    }

    pub fn is_instructor(&self) -> bool {
        self.role == Role::Instructor
    }
}

impl FromRequestParts<Arc<AppState>> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or_else(ApiError::unauthorized)?;
        let entry = state.token(token).ok_or_else(ApiError::unauthorized)?;
        Ok(Caller { role: entry.role, actor_id: entry.actor_id.clone() })
    }
}

/// A caller holding an instructor token.
#[derive(Debug, Clone)]
pub struct Instructor(pub Caller);

impl FromRequestParts<Arc<AppState>> for Instructor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Self, ApiError> {
        let caller = Caller::from_request_parts(parts, state).await?;
        if !caller.is_instructor() {
            return Err(ApiError::forbidden("instructor role required"));
        }
        Ok(Instructor(caller))
    }
}
