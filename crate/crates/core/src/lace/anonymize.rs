use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;

use crate::xapi::Statement;

use super::LaceError;

/// Personal fields removed before any aggregation.
pub const DROPPED_FIELDS: [&str; 3] = ["name", "gender", "email"];

/// Keyed pseudonymization settings.
#[derive(Clone)]
pub struct AnonymizationPolicy {
    secret_key: Vec<u8>,
}

impl std::fmt::Debug for AnonymizationPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnonymizationPolicy").field("secret_key", &"<redacted>").finish()
    }
}

impl AnonymizationPolicy {
    pub fn new(secret_key: impl Into<Vec<u8>>) -> Result<Self, LaceError> {
        let secret_key = secret_key.into();
        if secret_key.is_empty() {
            return Err(LaceError::EmptyKey);
        }
        Ok(AnonymizationPolicy { secret_key })
    }

    pub fn dropped_fields(&self) -> &'static [&'static str] {
        &DROPPED_FIELDS
    }

    /// Deterministic HMAC-SHA256 pseudonym rendered as 39 decimal digits
    /// (the first 128 bits of the tag), so no letter of the input survives.
    pub fn pseudonym(&self, actor_id: &str) -> String {
        let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(&self.secret_key).expect("HMAC accepts any key length");
        mac.update(actor_id.as_bytes());
        let tag = mac.finalize().into_bytes();
        let mut head = [0u8; 16];
        head.copy_from_slice(&tag[..16]);
        format!("{:039}", u128::from_be_bytes(head))
    }
}

pub fn anonymize(actor_id: &str, policy: &AnonymizationPolicy) -> String {
    policy.pseudonym(actor_id)
}

fn is_personal_key(iri: &str) -> bool {
    let last = iri.trim_end_matches('/').rsplit(['/', '#', ':']).next().unwrap_or(iri).to_ascii_lowercase();
    DROPPED_FIELDS.iter().any(|f| last.contains(f))
}

/// Copy of `stmt` without the actor display name or any context extension
/// whose key names a personal field.
pub fn strip_personal_data(stmt: &Statement) -> Statement {
    let mut s = stmt.clone();
    s.actor.display_name = None;
    if let Some(ctx) = s.context.as_mut() {
        ctx.extensions.retain(|k, _| !is_personal_key(k));
    }
    s
}
