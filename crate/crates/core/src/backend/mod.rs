//! Chat-completion backends.
//!
//! Every agent call is a single self-contained request: an optional system prompt
//! plus one user message carrying the rendered template. Nothing but the returned
//! message text is used by the engine, so the network client and the scripted
//! backend are interchangeable.

mod openai;
mod scripted;

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::AgentRole;

pub use openai::{BackendConfig, HttpReply, OpenAiBackend, ReqwestTransport, Transport, TransportFailure};
pub use scripted::{record_replay, record_replay_rounds, Matcher, ScriptRule, ScriptedBackend};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Which agent is asking. Not sent over the wire; scripted backends match on it.
    #[serde(default)]
    pub role: Option<AgentRole>,
    #[serde(default)]
    pub system: Option<String>,
    pub user: String,
    /// Falls back to the backend's configured temperature when absent.
    #[serde(default)]
    pub temperature: Option<f64>,
}

impl ChatRequest {
    pub fn new(role: AgentRole, user: impl Into<String>) -> Self {
        ChatRequest { role: Some(role), system: None, user: user.into(), temperature: None }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub usage: Option<Usage>,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("API key missing: environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport error after {attempts} attempts: {message}")]
    TransportError { attempts: u32, message: String },
    #[error("provider returned HTTP {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("provider returned an empty message")]
    EmptyResponse,
    #[error("script exhausted for {0}")]
    ScriptExhausted(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("transcript cannot be replayed: {0}")]
    IncompleteTranscript(String),
}

#[async_trait]
pub trait Backend: Send + Sync {
    async fn complete(&self, request: ChatRequest) -> Result<ChatResponse, BackendError>;

    /// Model name recorded in transcript headers.
    fn model(&self) -> &str;
}

#[async_trait]
impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    async fn complete(&self, request: ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request).await
    }

    fn model(&self) -> &str {
        (**self).model()
    }
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
