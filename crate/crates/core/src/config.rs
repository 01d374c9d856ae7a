//! Instructor-tunable agent parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grading::{LimitOverrides, RunnerRegistry};
use crate::scaffold::{
    DirectiveRow, DirectiveTable, GenerationParams, TutorSettings, DEFAULT_REDACTION_THRESHOLD, MIN_REDACTION_THRESHOLD,
};
use crate::validation::FieldErrors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LlmProvider {
    /// Deterministic local echo.
    #[default]
    Mock,
    /// No model; every request gets the static hint.
    Disabled,
    /// An HTTP chat-completions endpoint.
    OpenaiCompatible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub provider_key: LlmProvider,
    pub endpoint: String,
    pub model_name: String,
    pub max_reply_chars: usize,
    pub timeout_ms: u64,
    /// Concurrent model calls; further requests queue.
    pub max_concurrent: usize,
    pub determinism: f64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            provider_key: LlmProvider::Mock,
            endpoint: String::new(),
            model_name: String::new(),
            max_reply_chars: 2000,
            timeout_ms: 30_000,
            max_concurrent: 4,
            determinism: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub retrieval_k: usize,
    pub session_gap_s: u64,
    pub redaction_threshold_tokens: usize,
    pub prompt_char_budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directive_overrides: Option<Vec<DirectiveRow>>,
    pub llm: LlmSettings,
    /// Limits layered over each runner's defaults, by language tag.
    pub runner_limits: BTreeMap<String, LimitOverrides>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            retrieval_k: 5,
            session_gap_s: crate::lace::DEFAULT_SESSION_GAP_S,
            redaction_threshold_tokens: DEFAULT_REDACTION_THRESHOLD,
            prompt_char_budget: 6000,
            directive_overrides: None,
            llm: LlmSettings::default(),
            runner_limits: BTreeMap::new(),
        }
    }
}

impl AgentConfig {
    pub fn from_toml(text: &str) -> Result<Self, FieldErrors> {
        let de = toml::Deserializer::parse(text).map_err(|e| single("", e.to_string()))?;
        let cfg: AgentConfig = serde_path_to_error::deserialize(de).map_err(|e| single(&e.path().to_string(), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, FieldErrors> {
        let cfg: AgentConfig =
            serde_path_to_error::deserialize(value).map_err(|e| single(&e.path().to_string(), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FieldErrors> {
        let mut errs = FieldErrors::default();
        if self.retrieval_k == 0 {
            errs.push("retrieval_k", "must be positive");
        }
        if self.session_gap_s == 0 {
            errs.push("session_gap_s", "must be positive");
        }
        if self.redaction_threshold_tokens < MIN_REDACTION_THRESHOLD {
            errs.push("redaction_threshold_tokens", format!("must be at least {MIN_REDACTION_THRESHOLD}"));
        }
        if self.prompt_char_budget == 0 {
            errs.push("prompt_char_budget", "must be positive");
        }
        if self.llm.max_reply_chars == 0 {
            errs.push("llm.max_reply_chars", "must be positive");
        }
        if self.llm.timeout_ms == 0 {
            errs.push("llm.timeout_ms", "must be positive");
        }
        if self.llm.max_concurrent == 0 {
            errs.push("llm.max_concurrent", "must be positive");
        }
        if !(0.0..=2.0).contains(&self.llm.determinism) {
            errs.push("llm.determinism", "must be between 0 and 2");
        }
        if self.llm.provider_key == LlmProvider::OpenaiCompatible {
            if !(self.llm.endpoint.starts_with("http://") || self.llm.endpoint.starts_with("https://")) {
                errs.push("llm.endpoint", "must be an http(s) URL");
            }
            if self.llm.model_name.trim().is_empty() {
                errs.push("llm.model_name", "must not be empty");
            }
        }
        for (tag, l) in &self.runner_limits {
            let fields = [
                ("wall_ms", l.wall_ms.map(|v| v as u128)),
                ("cpu_ms", l.cpu_ms.map(|v| v as u128)),
                ("memory_bytes", l.memory_bytes.map(|v| v as u128)),
                ("output_cap_bytes", l.output_cap_bytes.map(|v| v as u128)),
            ];
            for (name, v) in fields {
                if v == Some(0) {
                    errs.push(format!("runner_limits.{tag}.{name}"), "must be positive");
                }
            }
        }
        if let Some(rows) = &self.directive_overrides {
            if let Err(e) = DirectiveTable::default().with_overrides(rows) {
                errs.0.extend(e.0);
            }
        }
        errs.into_result()
    }

    /// The shipped directive table with this config's overrides applied.
    pub fn directive_table(&self) -> DirectiveTable {
        let base = DirectiveTable::default();
        match &self.directive_overrides {
            Some(rows) => base.with_overrides(rows).unwrap_or(base),
            None => base,
        }
    }

    /// `registry` with this config's limit overrides layered on.
    pub fn apply_runner_limits(&self, registry: &RunnerRegistry) -> RunnerRegistry {
        let mut out = registry.clone();
        for (tag, o) in &self.runner_limits {
            if let Some(spec) = out.runners.get_mut(tag) {
                let l = &mut spec.limits;
                l.wall_ms = o.wall_ms.or(l.wall_ms);
                l.cpu_ms = o.cpu_ms.or(l.cpu_ms);
                l.memory_bytes = o.memory_bytes.or(l.memory_bytes);
                l.output_cap_bytes = o.output_cap_bytes.or(l.output_cap_bytes);
            }
        }
        out
    }

    pub fn tutor_settings(&self, source_limit: usize) -> TutorSettings {
        TutorSettings {
            retrieval_k: self.retrieval_k,
            session_gap_s: self.session_gap_s,
            redaction_threshold: self.redaction_threshold_tokens,
            prompt_char_budget: self.prompt_char_budget,
            source_limit,
            generation: GenerationParams { max_reply_chars: self.llm.max_reply_chars, determinism: self.llm.determinism },
            ..TutorSettings::default()
        }
    }
}

fn single(path: &str, message: String) -> FieldErrors {
    let mut e = FieldErrors::default();
    e.push(if path.is_empty() || path == "." { "config".to_string() } else { path.to_string() }, message);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::RunnerRegistry;

    #[test]
    fn defaults_are_valid() {
        let c = AgentConfig::default();
        c.validate().unwrap();
        assert_eq!((c.retrieval_k, c.session_gap_s, c.redaction_threshold_tokens, c.prompt_char_budget), (5, 1800, 8, 6000));
        assert_eq!(AgentConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn invalid_fields_reported_by_path() {
        let err = AgentConfig::from_json(serde_json::json!({"retrieval_k": 0, "redaction_threshold_tokens": 2})).unwrap_err();
        assert_eq!(err.paths(), ["retrieval_k", "redaction_threshold_tokens"]);
        let err = AgentConfig::from_json(serde_json::json!({"llm": {"max_reply_chars": "many"}})).unwrap_err();
        assert_eq!(err.paths(), ["llm.max_reply_chars"]);
        let err = AgentConfig::from_json(serde_json::json!({"llm": {"provider_key": "openai_compatible"}})).unwrap_err();
        assert_eq!(err.paths(), ["llm.endpoint", "llm.model_name"]);
    }

    #[test]
    fn partial_directive_override_rejected() {
        let rows: Vec<_> = DirectiveTable::default().rows().take(3).cloned().collect();
        let cfg = AgentConfig { directive_overrides: Some(rows), ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn runner_limits_layer_over_registry() {
        let cfg = AgentConfig::from_toml("[runner_limits.python3]\nwall_ms = 1234\n").unwrap();
        let reg = cfg.apply_runner_limits(&RunnerRegistry::default());
        let l = reg.get("python3").unwrap().limits();
        assert_eq!(l.wall_ms, 1234);
        assert_eq!(l.cpu_ms, 3000);
    }
}
