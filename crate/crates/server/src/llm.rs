//! Model backends selected by `llm.provider_key`.

use std::sync::Arc;
use std::time::Duration;

use codecoach::config::{LlmProvider, LlmSettings};
use codecoach::scaffold::{DisabledClient, GenerationParams, LlmClient, LlmError, MockClient, PromptBundle};
use serde::{Deserialize, Serialize};
use tokio::runtime::Handle;

/// Chat-completions client. `generate` blocks on the runtime behind
/// `handle`, so it must run on a blocking thread.
pub struct OpenAiCompatible {
    http: reqwest::Client,
    handle: Handle,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for OpenAiCompatible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiCompatible").field("endpoint", &self.endpoint).field("model", &self.model).finish()
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

impl OpenAiCompatible {
    pub fn new(settings: &LlmSettings, api_key: Option<String>, handle: Handle) -> Result<Self, LlmError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(settings.timeout_ms))
            .build()
            .map_err(|e| LlmError::Unavailable(format!("http client: {e}")))?;
        Ok(OpenAiCompatible {
            http,
            handle,
            endpoint: settings.endpoint.clone(),
            model: settings.model_name.clone(),
            api_key,
        })
    }

    async fn call(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<String, LlmError> {
        let system = bundle.render_system();
        let user = bundle.render_sections();
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage { role: "system", content: &system }, ChatMessage { role: "user", content: &user }],
            temperature: params.determinism,
        };
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| LlmError::Unavailable(e.without_url().to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Unavailable(format!("endpoint answered {status}")));
        }
        let parsed: ChatResponse =
            resp.json().await.map_err(|e| LlmError::Unavailable(format!("malformed reply: {}", e.without_url())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Unavailable("reply has no content".into()))
    }
}

impl LlmClient for OpenAiCompatible {
    fn generate(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<String, LlmError> {
        self.handle.block_on(self.call(bundle, params))
    }
}

/// The client for `settings`. A misconfigured remote backend degrades to
/// the disabled client so feedback still falls back to static hints.
pub fn build_client(settings: &LlmSettings, api_key: Option<String>, handle: Handle) -> Arc<dyn LlmClient> {
    match settings.provider_key {
        LlmProvider::Mock => Arc::new(MockClient),
        LlmProvider::Disabled => Arc::new(DisabledClient),
        LlmProvider::OpenaiCompatible => match OpenAiCompatible::new(settings, api_key, handle) {
            Ok(c) => Arc::new(c),
            Err(e) => {
                tracing::error!(error = %e, "model client unavailable; using static hints");
                Arc::new(DisabledClient)
            }
        },
    }
}
