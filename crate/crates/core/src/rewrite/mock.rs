//! Deterministic in-process stand-in for a chat-completions / embeddings
//! server. Useful for tests and for dry runs of the pipeline.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use super::parse::compose;
use super::prompt::extract_document;
use crate::util::hash64;

#[derive(Debug, Clone)]
pub struct MockConfig {
    /// Fraction of documents (chosen by content hash) answered with HTTP 500
    /// while failures are enabled.
    pub fail_fraction: f64,
    pub fail_seed: u64,
    /// Documents always answered with HTTP 500 while failures are enabled.
    pub fail_texts: HashSet<String>,
    /// Fraction of documents answered with an untagged completion.
    pub untagged_fraction: f64,
    /// Upper bound of a per-document delay, to scramble arrival order.
    pub max_latency_ms: u64,
    pub embedding_dim: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            fail_fraction: 0.0,
            fail_seed: 0,
            fail_texts: HashSet::new(),
            untagged_fraction: 0.0,
            max_latency_ms: 0,
            embedding_dim: 32,
        }
    }
}

fn unit_hash(seed: u64, text: &str) -> f64 {
    let mut buf = seed.to_le_bytes().to_vec();
    buf.extend_from_slice(text.as_bytes());
    (hash64(&buf) >> 11) as f64 / (1u64 << 53) as f64
}

impl MockConfig {
    pub fn fails(&self, doc_text: &str) -> bool {
        self.fail_texts.contains(doc_text) || unit_hash(self.fail_seed, doc_text) < self.fail_fraction
    }

    fn untagged(&self, doc_text: &str) -> bool {
        unit_hash(self.fail_seed ^ 0x5a5a, doc_text) < self.untagged_fraction
    }
}

/// The tagged completion the mock returns for a document.
pub fn mock_completion(doc_text: &str) -> String {
    let words: Vec<&str> = doc_text.split_whitespace().collect();
    let thinking = format!(
        "The draft has {} words. Restate it clearly, keep every detail, and remove noise.",
        words.len()
    );
    let mut seen = HashSet::new();
    let lines: Vec<String> = doc_text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty() && seen.insert(l.clone()))
        .collect();
    let improved = format!(
        "Here is a clearer version of the material.\n\n{}\n\nIn summary, the points above cover the topic in order.",
        lines.join("\n")
    );
    compose(&thinking, &improved)
}

/// Deterministic bag-of-words embedding used by the embeddings route.
pub fn mock_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim.max(1)];
    for w in text.to_lowercase().split_whitespace() {
        let h = hash64(w.as_bytes());
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        v[((h >> 1) % dim.max(1) as u64) as usize] += sign;
    }
    v
}

struct MockState {
    cfg: MockConfig,
    failures_enabled: AtomicBool,
    chat_requests: AtomicU64,
    embedding_requests: AtomicU64,
}

async fn chat(State(st): State<Arc<MockState>>, Json(body): Json<Value>) -> Response {
    st.chat_requests.fetch_add(1, Ordering::SeqCst);
    let prompt = body["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    let doc = extract_document(prompt).unwrap_or(prompt).to_string();
    if st.cfg.max_latency_ms > 0 {
        let ms = hash64(doc.as_bytes()) % (st.cfg.max_latency_ms + 1);
        tokio::time::sleep(Duration::from_millis(ms)).await;
    }
    if st.failures_enabled.load(Ordering::SeqCst) && st.cfg.fails(&doc) {
        return (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response();
    }
    let content = if st.cfg.untagged(&doc) {
        "I could not follow the requested format.".to_string()
    } else {
        mock_completion(&doc)
    };
    Json(json!({
        "id": "mock",
        "object": "chat.completion",
        "model": body["model"],
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

async fn embeddings(State(st): State<Arc<MockState>>, Json(body): Json<Value>) -> Response {
    st.embedding_requests.fetch_add(1, Ordering::SeqCst);
    let inputs: Vec<String> = match &body["input"] {
        Value::String(s) => vec![s.clone()],
        Value::Array(a) => a.iter().filter_map(|v| v.as_str().map(String::from)).collect(),
        _ => return (StatusCode::BAD_REQUEST, "missing input").into_response(),
    };
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"object": "embedding", "index": i, "embedding": mock_embedding(t, st.cfg.embedding_dim)}))
        .collect();
    Json(json!({"object": "list", "data": data, "model": body["model"]})).into_response()
}

/// A running mock server on a localhost port. Shuts down on drop.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(cfg: MockConfig) -> std::io::Result<Self> {
        Self::start_on(cfg, "127.0.0.1:0")
    }

    /// Bind to a specific address, e.g. `127.0.0.1:8000`.
    pub fn start_on(cfg: MockConfig, addr: &str) -> std::io::Result<Self> {
        let state = Arc::new(MockState {
            cfg,
            failures_enabled: AtomicBool::new(true),
            chat_requests: AtomicU64::new(0),
            embedding_requests: AtomicU64::new(0),
        });
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let app = Router::new()
            .route("/v1/chat/completions", post(chat))
            .route("/v1/embeddings", post(embeddings))
            .with_state(state.clone());
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("mock runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("mock server");
            });
        });
        Ok(MockServer {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn set_failures_enabled(&self, on: bool) {
        self.state.failures_enabled.store(on, Ordering::SeqCst);
    }

    pub fn chat_requests(&self) -> u64 {
        self.state.chat_requests.load(Ordering::SeqCst)
    }

    pub fn embedding_requests(&self) -> u64 {
        self.state.embedding_requests.load(Ordering::SeqCst)
    }

    /// Block until the server stops accepting connections (for tests).
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}
