//! Filling assistant turns through a chat-completions endpoint.
//!
//! [`GenerationClient::generate_batch`] keeps at most `max_in_flight`
//! requests outstanding, returns results in input order, retries timeouts,
//! 429 and 5xx responses with exponential backoff and full jitter, and never
//! retries 401/403. With a [`ResponseCache`], repeated requests are answered
//! from disk without touching the network.

mod cache;
mod transport;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{render_chatml, ChatRecord, Template};
use crate::rng::seeded;

pub use cache::{CacheError, CacheKey, ResponseCache};
pub use transport::{parse_completion, ChatRequest, ChatTransport, HttpTransport, TransportError, WireMessage};

/// Environment variable holding the endpoint API key.
pub const API_KEY_ENV: &str = "POLYPERSONA_API_KEY";

/// Exponential backoff with full jitter: the wait before retry `k` (from 0)
/// is uniform in `[0, min(cap, base * 2^k)]` milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub base_ms: u64,
    pub cap_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { base_ms: 500, cap_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn ceiling_ms(&self, retry: u32) -> u64 {
        self.base_ms.saturating_mul(1u64.checked_shl(retry).unwrap_or(u64::MAX)).min(self.cap_ms)
    }

    pub fn delay<R: Rng + ?Sized>(&self, retry: u32, rng: &mut R) -> Duration {
        Duration::from_millis(rng.random_range(0..=self.ceiling_ms(retry)))
    }
}

/// Where and how to ask for completions. The API key is never serialized
/// and is hidden from `Debug`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Seeds the retry jitter.
    pub seed: u64,
    /// Rendering used for cache keys.
    pub template: Template,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model_name: String::new(),
            api_key: None,
            max_tokens: 256,
            temperature: 0.7,
            request_timeout_secs: 60.0,
            max_retries: 3,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            seed: 0,
            template: Template::Fallback,
        }
    }
}

impl std::fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("model_name", &self.model_name)
            .field("api_key", &self.api_key.as_ref().map(|_| "***"))
            .field("max_tokens", &self.max_tokens)
            .field("temperature", &self.temperature)
            .field("request_timeout_secs", &self.request_timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("max_in_flight", &self.max_in_flight)
            .field("retry", &self.retry)
            .field("seed", &self.seed)
            .field("template", &self.template)
            .finish()
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), model_name: model_name.into(), ..Self::default() }
    }

    /// Takes the API key from [`API_KEY_ENV`] if set and nonempty.
    pub fn with_env_api_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: &str| Err(GenerationError::Config(m.to_string()));
        if self.base_url.is_empty() {
            return bad("base_url is empty");
        }
        if self.model_name.is_empty() {
            return bad("model_name is empty");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be a nonnegative number");
        }
        if !self.request_timeout_secs.is_finite() || self.request_timeout_secs <= 0.0 {
            return bad("request_timeout_secs must be positive");
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerationError {
    #[error("endpoint error: {0}")]
    Endpoint(TransportError),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("timed out on all {attempts} attempts")]
    TimeoutExhausted { attempts: u32 },
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

/// Outcome for one record. `text` is empty exactly when `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub record_id: String,
    pub model_name: String,
    pub text: String,
    pub latency_ms: u64,
    /// Requests sent; 0 for cache hits.
    pub attempt_count: u32,
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of a generations file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationLine {
    pub record_id: String,
    pub model: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&GenerationResult> for GenerationLine {
    fn from(r: &GenerationResult) -> Self {
        Self { record_id: r.record_id.clone(), model: r.model_name.clone(), text: r.text.clone(), error: r.error.clone() }
    }
}

/// Builds the wire request: the system and user turns only, so the endpoint
/// answers instead of continuing a prefilled assistant turn.
pub fn chat_request(record: &ChatRecord, cfg: &EndpointConfig) -> ChatRequest {
    let messages = record
        .messages
        .iter()
        .take(2)
        .map(|m| WireMessage { role: m.role.as_str().to_string(), content: m.content.clone() })
        .collect();
    ChatRequest { model: cfg.model_name.clone(), messages, temperature: cfg.temperature, max_tokens: cfg.max_tokens }
}

pub fn cache_key(record: &ChatRecord, cfg: &EndpointConfig) -> CacheKey {
    CacheKey {
        model: cfg.model_name.clone(),
        input_text: render_chatml(record, cfg.template).input_text,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    }
}

pub struct GenerationClient {
    cfg: EndpointConfig,
    transport: Arc<dyn ChatTransport>,
}

impl GenerationClient {
    /// A client speaking HTTP to `cfg.base_url`.
    pub fn new(cfg: EndpointConfig) -> Result<Self, GenerationError> {
        cfg.validate()?;
        let transport = HttpTransport::new(&cfg.base_url, cfg.api_key.clone(), cfg.timeout());
        Ok(Self { cfg, transport: Arc::new(transport) })
    }

    pub fn with_transport(cfg: EndpointConfig, transport: Arc<dyn ChatTransport>) -> Result<Self, GenerationError> {
        cfg.validate()?;
        Ok(Self { cfg, transport })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Requests a completion for one record, retrying as configured.
    pub fn generate(&self, record: &ChatRecord) -> Result<GenerationResult, GenerationError> {
        let start = Instant::now();
        let (outcome, attempts) = self.call_with_retries(record);
        let text = outcome?;
        Ok(GenerationResult {
            record_id: record.id.clone(),
            model_name: self.cfg.model_name.clone(),
            text,
            latency_ms: start.elapsed().as_millis() as u64,
            attempt_count: attempts,
            cached: false,
            error: None,
        })
    }

    fn call_with_retries(&self, record: &ChatRecord) -> (Result<String, GenerationError>, u32) {
        let request = chat_request(record, &self.cfg);
        let mut rng = seeded(self.cfg.seed, &format!("retry/{}", record.id), 0);
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let err = match self.transport.send(&request) {
                Ok(text) => return (Ok(text), attempts),
                Err(e) => e,
            };
            if let TransportError::Status { status: status @ (401 | 403), .. } = err {
                return (Err(GenerationError::Auth { status }), attempts);
            }
            if !err.is_retryable() || attempts > self.cfg.max_retries {
                let final_err = match err {
                    TransportError::Timeout => GenerationError::TimeoutExhausted { attempts },
                    other => GenerationError::Endpoint(other),
                };
                return (Err(final_err), attempts);
            }
            std::thread::sleep(self.cfg.retry.delay(attempts - 1, &mut rng));
        }
    }

    fn generate_one(&self, record: &ChatRecord, cache: Option<&ResponseCache>) -> GenerationResult {
        let start = Instant::now();
        let key = cache.map(|_| cache_key(record, &self.cfg));
        if let (Some(cache), Some(key)) = (cache, key.as_ref()) {
            if let Some(text) = cache.get(key) {
                return GenerationResult {
                    record_id: record.id.clone(),
                    model_name: self.cfg.model_name.clone(),
                    text,
                    latency_ms: start.elapsed().as_millis() as u64,
                    attempt_count: 0,
                    cached: true,
                    error: None,
                };
            }
        }
        let (outcome, attempts) = self.call_with_retries(record);
        let (text, error) = match outcome {
            Ok(text) => {
                if let (Some(cache), Some(key)) = (cache, key.as_ref()) {
                    // a failed cache write only costs a future request
                    let _ = cache.put(key, &text);
                }
                (text, None)
            }
            Err(e) => (String::new(), Some(e.to_string())),
        };
        GenerationResult {
            record_id: record.id.clone(),
            model_name: self.cfg.model_name.clone(),
            text,
            latency_ms: start.elapsed().as_millis() as u64,
            attempt_count: attempts,
            cached: false,
            error,
        }
    }

    /// Generates for every record with at most `max_in_flight` requests
    /// outstanding. Failures become per-record error entries; output order is
    /// input order.
    pub fn generate_batch(&self, records: &[ChatRecord], cache: Option<&ResponseCache>) -> Vec<GenerationResult> {
        let workers = self.cfg.max_in_flight.min(records.len());
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<GenerationResult>>> = Mutex::new(vec![None; records.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(record) = records.get(i) else { break };
                    let result = self.generate_one(record, cache);
                    slots.lock().expect("no worker panics while holding the lock")[i] = Some(result);
                });
            }
        });
        slots.into_inner().expect("workers finished").into_iter().map(|r| r.expect("every slot filled")).collect()
    }
}
