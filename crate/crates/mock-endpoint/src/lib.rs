//! A local chat-completions server for tests and offline runs.
//!
//! Answers `POST /v1/chat/completions` with a deterministic reply derived
//! from the request's model name and user message, and counts requests and
//! the peak number of requests being handled at once. Failures can be
//! scripted: the first `k` calls, calls whose user message contains a
//! marker, or every call with 401.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;

#[derive(Clone, Debug, Default)]
pub struct MockConfig {
    /// Time spent on every request before answering.
    pub delay: Duration,
    /// Fail this many of the first calls with `fail_status`.
    pub fail_first: usize,
    pub fail_status: u16,
    /// Always fail calls whose user message contains this text.
    pub fail_marker: Option<String>,
    /// Answer every call with 401.
    pub reject_auth: bool,
}

impl MockConfig {
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn failing_first(mut self, k: usize, status: u16) -> Self {
        self.fail_first = k;
        self.fail_status = status;
        self
    }

    pub fn failing_on(mut self, marker: impl Into<String>) -> Self {
        self.fail_marker = Some(marker.into());
        self
    }

    pub fn rejecting_auth(mut self) -> Self {
        self.reject_auth = true;
        self
    }
}

/// Counters observed by the server.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MockStats {
    pub requests: usize,
    pub peak_in_flight: usize,
}

#[derive(Default)]
struct Shared {
    config: MockConfig,
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    bodies: Mutex<Vec<Value>>,
    auth_headers: Mutex<Vec<Option<String>>>,
}

struct InFlight<'a>(&'a Shared);

impl<'a> InFlight<'a> {
    fn enter(shared: &'a Shared) -> Self {
        let now = shared.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        shared.peak.fetch_max(now, Ordering::SeqCst);
        InFlight(shared)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// A running server; stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral localhost port and serves on a background thread.
    pub fn start(config: MockConfig) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared { config, ..Shared::default() });
        let (tx, rx) = oneshot::channel::<()>();
        let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(shared.clone());
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener converts");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        rx.await.ok();
                    })
                    .await
                    .expect("mock server runs");
            });
        });
        Ok(Self { addr, shared, shutdown: Some(tx), thread: Some(thread) })
    }

    /// Base URL without a trailing slash, e.g. `http://127.0.0.1:40123`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> MockStats {
        MockStats {
            requests: self.shared.requests.load(Ordering::SeqCst),
            peak_in_flight: self.shared.peak.load(Ordering::SeqCst),
        }
    }

    /// Request bodies in arrival order.
    pub fn bodies(&self) -> Vec<Value> {
        self.shared.bodies.lock().unwrap().clone()
    }

    /// `Authorization` header of each request in arrival order.
    pub fn auth_headers(&self) -> Vec<Option<String>> {
        self.shared.auth_headers.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

async fn chat(State(shared): State<Arc<Shared>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let _guard = InFlight::enter(&shared);
    let call = shared.requests.fetch_add(1, Ordering::SeqCst);
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(String::from);
    shared.auth_headers.lock().unwrap().push(auth);
    shared.bodies.lock().unwrap().push(body.clone());
    if !shared.config.delay.is_zero() {
        tokio::time::sleep(shared.config.delay).await;
    }

    let cfg = &shared.config;
    if cfg.reject_auth {
        return error(StatusCode::UNAUTHORIZED, "invalid api key");
    }
    let user = user_message(&body);
    if cfg.fail_marker.as_deref().is_some_and(|m| user.contains(m)) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "scripted failure");
    }
    if call < cfg.fail_first {
        let status = StatusCode::from_u16(cfg.fail_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return error(status, "scripted failure");
    }
    let model = body.get("model").and_then(Value::as_str).unwrap_or("mock");
    let text = reply(model, &user);
    Json(json!({
        "id": format!("mock-{call}"),
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({"error": {"message": message}}))).into_response()
}

fn user_message(body: &Value) -> String {
    body.get("messages")
        .and_then(Value::as_array)
        .and_then(|ms| ms.iter().find(|m| m.get("role").and_then(Value::as_str) == Some("user")))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string()
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

const YES_NO: &[&str] = &[
    "Yes, I do. It fits how I live right now and I have been happy with that choice.",
    "No, not really. It has never been a priority for me given my situation.",
    "Yes, mostly because it saves me time and keeps things simple at home.",
    "No. I tried it once but it did not suit my routine or my budget.",
];

const AGREEMENT: &[&str] = &[
    "I agree with that. In my experience it holds more often than not.",
    "I somewhat disagree. From what I have seen the reality is more mixed.",
    "I strongly agree, and people around me mostly feel the same way.",
    "I disagree, because the costs usually fall on people who can least afford them.",
];

const OPEN: &[&str] = &[
    "For me the biggest factor is time. I work long hours, so anything that fits into a busy week wins. \
     I would change things if the options were more flexible.",
    "Honestly it depends on the month. When money is tight I am careful and plan ahead. \
     When things are calmer I try to enjoy what I have and help my family.",
    "I have mixed feelings about it. Some parts work well in my community, but others feel out of reach. \
     Better information would help people like me decide.",
    "My background shapes how I see this. I value practical solutions over promises. \
     Small, steady improvements have made the most difference in my life.",
];

/// Deterministic answer for the question type named in the user message.
pub fn reply(model: &str, user: &str) -> String {
    let h = fnv1a(&format!("{model}\u{1f}{user}")) as usize;
    let qtype = user
        .lines()
        .find_map(|l| l.strip_prefix("Question ("))
        .and_then(|rest| rest.split_once(')'))
        .map(|(t, _)| t)
        .unwrap_or("open");
    match qtype {
        "yesno" => YES_NO[h % YES_NO.len()].to_string(),
        "agreement" => AGREEMENT[h % AGREEMENT.len()].to_string(),
        "likert" => {
            let anchors: Vec<&str> = user
                .lines()
                .find_map(|l| l.strip_prefix("Scale: "))
                .map(|s| s.split(" | ").collect())
                .unwrap_or_default();
            match anchors.get(h % anchors.len().max(1)) {
                Some(a) => format!("{a}. That is roughly where I land, depending on the week."),
                None => "Sometimes. It depends on the week.".to_string(),
            }
        }
        _ => OPEN[h % OPEN.len()].to_string(),
    }
}
