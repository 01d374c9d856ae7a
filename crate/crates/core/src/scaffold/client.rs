use serde::{Deserialize, Serialize};

use super::prompt::PromptBundle;
use crate::lace::truncate_chars;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_reply_chars: usize,
    /// 0.0 asks for the most deterministic output the backend offers.
    pub determinism: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { max_reply_chars: 2000, determinism: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("language model unavailable: {0}")]
    Unavailable(String),
}

/// A text generator behind the feedback agent.
pub trait LlmClient: Send + Sync {
    /// Returns at most `params.max_reply_chars` characters.
    fn generate(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<String, LlmError>;
}

/// Deterministic stand-in that echoes the section labels and the phase
/// directive.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockClient;

impl LlmClient for MockClient {
    fn generate(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<String, LlmError> {
        let labels: Vec<&str> = bundle.sections.iter().map(|s| s.label.as_str()).collect();
        let directive = bundle.section(super::prompt::SectionLabel::PhaseDirective).unwrap_or_default();
        let reply = format!("[mock] sections: {}\n{}", labels.join(", "), directive);
        Ok(truncate_chars(&reply, params.max_reply_chars))
    }
}

/// A client that is never available.
#[derive(Debug, Clone, Copy, Default)]
pub struct DisabledClient;

impl LlmClient for DisabledClient {
    fn generate(&self, _: &PromptBundle, _: &GenerationParams) -> Result<String, LlmError> {
        Err(LlmError::Unavailable("no language model configured".into()))
    }
}

/// Returns a fixed reply regardless of the prompt.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient(pub String);

impl LlmClient for ScriptedClient {
    fn generate(&self, _: &PromptBundle, params: &GenerationParams) -> Result<String, LlmError> {
        Ok(truncate_chars(&self.0, params.max_reply_chars))
    }
}
