use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{Backend, BackendError, ChatRequest, ChatResponse, Usage, DEFAULT_TEMPERATURE};

/// Provider bodies quoted in errors are cut to this many characters.
const MAX_ERROR_BODY_CHARS: usize = 2048;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries_transport: u32,
    /// Name of the environment variable holding the API key. The key itself is never stored in config.
    pub api_key_env: String,
    pub backoff_base_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            temperature: DEFAULT_TEMPERATURE,
            timeout_secs: 60.0,
            max_retries_transport: 2,
            api_key_env: "OPENAI_API_KEY".into(),
            backoff_base_ms: 500,
        }
    }
}

impl fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("temperature", &self.temperature)
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries_transport", &self.max_retries_transport)
            .field("api_key_env", &self.api_key_env)
            .finish()
    }
}

impl BackendConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidConfig(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(BackendError::InvalidConfig("timeout must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(BackendError::InvalidConfig(format!("base_url `{}` is not an http(s) URL", self.base_url)));
        }
        if self.model.trim().is_empty() {
            return Err(BackendError::InvalidConfig("model must be set".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Io(String),
}

/// Sends one JSON POST. Split out so retry and timeout handling can be exercised
/// without a network.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportFailure>;
}

#[derive(Debug, Clone, Default)]
pub struct ReqwestTransport {
    client: reqwest::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

#[async_trait]
impl Transport for ReqwestTransport {
    async fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportFailure> {
        let to_failure = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else {
                TransportFailure::Io(e.to_string())
            }
        };
        let response = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .timeout(timeout)
            .json(body)
            .send()
            .await
            .map_err(to_failure)?;
        let status = response.status().as_u16();
        let body = response.text().await.map_err(to_failure)?;
        Ok(HttpReply { status, body })
    }
}

/// Client for any endpoint speaking the OpenAI chat-completions format.
pub struct OpenAiBackend {
    config: BackendConfig,
    api_key: String,
    transport: Arc<dyn Transport>,
}

impl fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("config", &self.config)
            .field("has_api_key", &!self.api_key.is_empty())
            .finish()
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((idx, _)) => format!("{}…", &text[..idx]),
        None => text.to_string(),
    }
}

impl OpenAiBackend {
    /// Reads the key from the configured environment variable. Fails with
    /// [`BackendError::AuthMissing`] before any request is attempted when it is unset.
    pub fn from_env(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        let key = std::env::var(&config.api_key_env).unwrap_or_default();
        Self::with_key(config, key, transport)
    }

    pub fn with_key(
        config: BackendConfig,
        api_key: impl Into<String>,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, BackendError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(BackendError::AuthMissing(config.api_key_env.clone()));
        }
        config.validate()?;
        Ok(OpenAiBackend { config, api_key, transport })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// The JSON body sent for `request`.
    pub fn wire_body(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature.unwrap_or(self.config.temperature),
        })
    }

    fn decode(&self, body: &str, latency: Duration) -> Result<ChatResponse, BackendError> {
        let wire: WireResponse = serde_json::from_str(body).map_err(|e| BackendError::ProviderError {
            status: 200,
            body: format!("undecodable response ({e}): {}", truncate_chars(body, MAX_ERROR_BODY_CHARS)),
        })?;
        let text = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        let usage = wire.usage.map(|u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok(ChatResponse { text, usage, latency })
    }
}

#[async_trait]
impl Backend for OpenAiBackend {
    async fn complete(&self, request: ChatRequest) -> Result<ChatResponse, BackendError> {
        let url = self.config.endpoint();
        let body = self.wire_body(&request);
        let timeout = self.config.timeout();
        let attempts = self.config.max_retries_transport + 1;
        let mut last = TransportFailure::Io("no attempt made".into());

        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = Duration::from_millis(self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16)));
                tokio::time::sleep(delay).await;
            }
            let started = Instant::now();
            let sent = tokio::time::timeout(timeout, self.transport.post_json(&url, &self.api_key, &body, timeout)).await;
            let outcome = sent.unwrap_or(Err(TransportFailure::Timeout));
            match outcome {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    debug!(model = %self.config.model, attempt, "completion received");
                    return self.decode(&reply.body, started.elapsed());
                }
                Ok(reply) => {
                    return Err(BackendError::ProviderError {
                        status: reply.status,
                        body: truncate_chars(&reply.body, MAX_ERROR_BODY_CHARS),
                    });
                }
                Err(failure) => {
                    warn!(attempt, ?failure, "transport failure");
                    last = failure;
                }
            }
        }
        Err(match last {
            TransportFailure::Timeout => BackendError::Timeout(timeout),
            TransportFailure::Io(message) => BackendError::TransportError { attempts, message },
        })
    }

    fn model(&self) -> &str {
        &self.config.model
    }
}
