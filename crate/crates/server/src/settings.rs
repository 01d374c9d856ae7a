//! Server configuration: a TOML file, `AGENT_*` environment overrides and
//! command-line flags, in increasing precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use codecoach::config::{AgentConfig, LlmProvider};
use codecoach::grading::{IsolationMode, DEFAULT_SOURCE_LIMIT};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "AGENT_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Learner,
    Instructor,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEntry {
    pub token: String,
    pub role: Role,
    /// Identity recorded in the learning record store for this token.
    pub actor_id: String,
}

impl std::fmt::Debug for TokenEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenEntry").field("role", &self.role).field("actor_id", &self.actor_id).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Isolation {
    #[default]
    BestEffort,
    Strict,
}

impl From<Isolation> for IsolationMode {
    fn from(i: Isolation) -> Self {
        match i {
            Isolation::BestEffort => IsolationMode::BestEffort,
            Isolation::Strict => IsolationMode::Strict,
        }
    }
}

/// LLM settings taken from the environment; they win over saved config.
#[derive(Debug, Clone, Default)]
pub struct LlmEnv {
    pub provider_key: Option<LlmProvider>,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
}

impl LlmEnv {
    pub fn apply(&self, agent: &mut AgentConfig) {
        if let Some(p) = self.provider_key {
            agent.llm.provider_key = p;
        }
        if let Some(e) = &self.endpoint {
            agent.llm.endpoint = e.clone();
        }
        if let Some(m) = &self.model_name {
            agent.llm.model_name = m.clone();
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// HMAC key for learner pseudonyms. Generated and kept in the data
    /// directory when absent.
    pub anonymization_key: Option<String>,
    /// Runner registry TOML; the built-in python3 runner when absent.
    pub runners_file: Option<PathBuf>,
    pub isolation: Isolation,
    pub source_limit_bytes: usize,
    pub tokens: Vec<TokenEntry>,
    pub agent: AgentConfig,
    /// Bearer credential for the model endpoint. Environment only.
    #[serde(skip)]
    pub llm_api_key: Option<String>,
    #[serde(skip)]
    pub llm_env: LlmEnv,
}

impl std::fmt::Debug for ServerConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerConfig")
            .field("bind", &self.bind)
            .field("port", &self.port)
            .field("data_dir", &self.data_dir)
            .field("runners_file", &self.runners_file)
            .field("isolation", &self.isolation)
            .field("source_limit_bytes", &self.source_limit_bytes)
            .field("tokens", &self.tokens)
            .field("agent", &self.agent)
            .finish_non_exhaustive()
    }
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            anonymization_key: None,
            runners_file: None,
            isolation: Isolation::default(),
            source_limit_bytes: DEFAULT_SOURCE_LIMIT,
            tokens: Vec::new(),
            agent: AgentConfig::default(),
            llm_api_key: None,
            llm_env: LlmEnv::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        let cfg: ServerConfig =
            serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("{}: {}", e.path(), e.inner()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies `AGENT_*` variables from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        let var = |name: &str| lookup(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty());
        if let Some(v) = var("BIND") {
            self.bind = v;
        }
        if let Some(v) = var("PORT") {
            self.port = v.parse().with_context(|| format!("{ENV_PREFIX}PORT: not a port number"))?;
        }
        if let Some(v) = var("DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("ANONYMIZATION_KEY") {
            self.anonymization_key = Some(v);
        }
        if let Some(v) = var("RUNNERS_FILE") {
            self.runners_file = Some(PathBuf::from(v));
        }
        if let Some(v) = var("ISOLATION") {
            self.isolation = parse_enum(&v).with_context(|| format!("{ENV_PREFIX}ISOLATION"))?;
        }
        if let Some(v) = var("LLM_PROVIDER") {
            self.llm_env.provider_key =
                Some(parse_enum::<LlmProvider>(&v).with_context(|| format!("{ENV_PREFIX}LLM_PROVIDER"))?);
        }
        if let Some(v) = var("LLM_ENDPOINT") {
            self.llm_env.endpoint = Some(v);
        }
        if let Some(v) = var("LLM_MODEL") {
            self.llm_env.model_name = Some(v);
        }
        self.llm_env.apply(&mut self.agent);
        if let Some(v) = var("LLM_API_KEY") {
            self.llm_api_key = Some(v);
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.source_limit_bytes == 0 {
            bail!("source_limit_bytes must be positive");
        }
        let mut seen = std::collections::HashSet::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.token.len() < 8 {
                bail!("tokens[{i}].token must be at least 8 characters");
            }
            if t.actor_id.trim().is_empty() {
                bail!("tokens[{i}].actor_id must not be empty");
            }
            if !seen.insert(t.token.as_str()) {
                bail!("tokens[{i}].token is duplicated");
            }
        }
        self.agent.validate().map_err(|e| anyhow::anyhow!("agent: {e}"))?;
        Ok(())
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> anyhow::Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| anyhow::anyhow!("unknown value"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_overrides_file() {
        let mut cfg = ServerConfig::from_toml(
            "port = 9000\n[[tokens]]\ntoken = \"learner-token\"\nrole = \"learner\"\nactor_id = \"alice\"\n[agent.llm]\nprovider_key = \"disabled\"\n",
        )
        .unwrap();
        let env: HashMap<&str, &str> = HashMap::from([
            ("AGENT_PORT", "9100"),
            ("AGENT_LLM_PROVIDER", "mock"),
            ("AGENT_LLM_API_KEY", "sk-test"),
            ("AGENT_DATA_DIR", ""),
        ]);
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.port, 9100);
        assert_eq!(cfg.agent.llm.provider_key, LlmProvider::Mock);
        assert_eq!(cfg.llm_api_key.as_deref(), Some("sk-test"));
        assert_eq!(cfg.data_dir, PathBuf::from("data"));
        cfg.validate().unwrap();
        assert!(!format!("{cfg:?}").contains("learner-token"));
    }

    #[test]
    fn bad_values_rejected() {
        let mut cfg = ServerConfig::default();
        assert!(cfg.apply_env(|k| (k == "AGENT_ISOLATION").then(|| "paranoid".to_string())).is_err());
        assert!(ServerConfig::from_toml("prot = 1\n").is_err());
        let short = ServerConfig::from_toml("[[tokens]]\ntoken = \"x\"\nrole = \"learner\"\nactor_id = \"a\"\n").unwrap();
        assert!(short.validate().is_err());
    }
}
