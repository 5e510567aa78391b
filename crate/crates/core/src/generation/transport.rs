use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

/// One chat-completions request body.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl TransportError {
    /// Timeouts, 408, 429, 5xx and connection failures.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Network(_) => true,
            TransportError::Status { status, .. } => matches!(status, 408 | 429 | 500..=599),
            TransportError::Malformed(_) => false,
        }
    }
}

/// Sends one request and returns the first choice's message content.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Blocking HTTP transport for `POST {base_url}/v1/chat/completions`.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/v1/chat/completions", base_url.trim_end_matches('/'));
        Self { agent, url, api_key }
    }
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport").field("url", &self.url).field("api_key", &self.api_key.as_ref().map(|_| "***")).finish()
    }
}

fn map_ureq(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
        other => TransportError::Network(other.to_string()),
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = serde_json::to_vec(request).map_err(|e| TransportError::Malformed(e.to_string()))?;
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let response = req.send(&body[..]).map_err(map_ureq)?;
        let status = response.status().as_u16();
        let text = response.into_body().read_to_string().map_err(map_ureq)?;
        if !(200..300).contains(&status) {
            let mut body = text;
            body.truncate(500);
            return Err(TransportError::Status { status, body });
        }
        parse_completion(&text)
    }
}

/// Extracts `choices[0].message.content`.
pub fn parse_completion(text: &str) -> Result<String, TransportError> {
    let value: Value = serde_json::from_str(text).map_err(|e| TransportError::Malformed(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(String::from)
        .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))
}
