//! Chat-completions client.
//!
//! Requests carry `model`, `messages` and `temperature`; the reply text is
//! `choices[0].message.content`. There are no retries. The network layer is
//! behind [`Transport`] so recorded exchanges can be replayed from disk.

use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, BackendIdentity, ChatMessage, ModelBackend, ModelRequest, Role};

pub const API_KEY_ENV: &str = "CRITIC_GATE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape at {location}")]
    Schema { location: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> u64 {
    120
}

fn default_in_flight() -> usize {
    4
}

impl EndpointConfig {
    pub fn actor(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            temperature: 1.0,
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn critic(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self { temperature: 0.0, ..Self::actor(base_url, model) }
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &Value, timeout: Duration) -> Result<HttpResponse, ChatError>;
}

#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &Value, timeout: Duration) -> Result<HttpResponse, ChatError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        let mut resp = agent
            .post(url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .content_type("application/json")
            .send(body.to_string())
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| ChatError::Transport(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// One recorded request/response pair, stored one per file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exchange {
    pub request: Value,
    pub response: RecordedResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordedResponse {
    pub status: u16,
    /// A JSON document, or a string holding a raw non-JSON body.
    pub body: Value,
}

/// Answers requests from recorded exchanges, matched on the request body.
#[derive(Debug, Default)]
pub struct ReplayTransport {
    exchanges: Vec<Exchange>,
}

impl ReplayTransport {
    pub fn new(exchanges: Vec<Exchange>) -> Self {
        Self { exchanges }
    }

    /// Loads every `*.json` file in `dir`, in file-name order.
    pub fn from_dir(dir: &Path) -> Result<Self, ChatError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| ChatError::Config(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let exchanges = paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| ChatError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| ChatError::Config(format!("{}: {e}", p.display())))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { exchanges })
    }
}

impl Transport for ReplayTransport {
    fn post_json(&self, _url: &str, _api_key: &str, body: &Value, _timeout: Duration) -> Result<HttpResponse, ChatError> {
        let hit = self
            .exchanges
            .iter()
            .find(|x| &x.request == body)
            .ok_or_else(|| ChatError::Transport("no recorded exchange matches the request".into()))?;
        let body = match &hit.response.body {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        Ok(HttpResponse { status: hit.response.status, body })
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    limit: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        while *busy >= self.limit {
            busy = self.freed.wait(busy).unwrap_or_else(|e| e.into_inner());
        }
        *busy += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut busy = self.0.busy.lock().unwrap_or_else(|e| e.into_inner());
        *busy -= 1;
        self.0.freed.notify_one();
    }
}

pub struct ChatClient {
    config: EndpointConfig,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    gate: Gate,
}

impl ChatClient {
    pub fn new(config: EndpointConfig, api_key: Option<String>, transport: Arc<dyn Transport>) -> Self {
        let gate = Gate { limit: config.max_in_flight.max(1), busy: Mutex::new(0), freed: Condvar::new() };
        Self { config, api_key, transport, gate }
    }

    /// Credential from the environment, real network transport.
    pub fn from_env(config: EndpointConfig) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(config, key, Arc::new(UreqTransport))
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }

    pub fn chat_complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        if self.config.base_url.trim().is_empty() {
            return Err(ChatError::Config("endpoint base_url is empty".into()));
        }
        let key = self
            .api_key
            .as_deref()
            .ok_or_else(|| ChatError::Config(format!("{API_KEY_ENV} is not set")))?;
        let body = self.request_body(messages);
        let resp = {
            let _slot = self.gate.acquire();
            self.transport.post_json(&self.config.url(), key, &body, Duration::from_secs(self.config.timeout_secs))?
        };
        if !(200..300).contains(&resp.status) {
            return Err(ChatError::Status { status: resp.status, body: resp.body });
        }
        extract_content(&resp.body)
    }
}

/// `choices[0].message.content` of a response body.
pub fn extract_content(body: &str) -> Result<String, ChatError> {
    let schema = |location: &str| ChatError::Schema { location: location.to_string() };
    let doc: Value = serde_json::from_str(body).map_err(|e| schema(&format!("body (line {}, column {})", e.line(), e.column())))?;
    let choices = doc.get("choices").and_then(Value::as_array).ok_or_else(|| schema("choices"))?;
    let first = choices.first().ok_or_else(|| schema("choices[0]"))?;
    let message = first.get("message").ok_or_else(|| schema("choices[0].message"))?;
    message
        .get("content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| schema("choices[0].message.content"))
}

/// A chat endpoint used as actor or critic.
pub struct ChatBackend {
    client: ChatClient,
}

impl ChatBackend {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }

    pub fn messages(request: &ModelRequest<'_>) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(request.messages.len() + 1);
        if !request.system.is_empty() {
            out.push(ChatMessage::new(Role::System, request.system.clone()));
        }
        out.extend(request.messages.iter().cloned());
        out
    }
}

impl ModelBackend for ChatBackend {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity { name: "chat".into(), version: self.client.config().model.clone() }
    }

    fn complete(&self, request: &ModelRequest<'_>) -> Result<String, BackendError> {
        Ok(self.client.chat_complete(&Self::messages(request))?)
    }
}
