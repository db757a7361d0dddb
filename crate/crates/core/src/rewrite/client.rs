//! OpenAI-compatible chat-completions client with retry.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::RewriteError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub max_input_tokens: usize,
    pub max_concurrency: usize,
    pub retry_limit: u32,
    pub seed: Option<u64>,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub request_timeout_secs: u64,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: String,
    /// Optional cap on the number of HTTP requests issued by one run.
    pub max_requests: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            endpoint_url: "http://127.0.0.1:8000".into(),
            model_name: "meta-llama/Llama-3.3-70B-Instruct".into(),
            temperature: 1.0,
            top_p: 0.9,
            max_tokens: 8192,
            max_input_tokens: 8192,
            max_concurrency: 16,
            retry_limit: 5,
            seed: None,
            backoff_base_ms: 1_000,
            backoff_cap_ms: 60_000,
            request_timeout_secs: 600,
            api_key_env: "OPENAI_API_KEY".into(),
            max_requests: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), RewriteError> {
        let bad = |m: &str| Err(RewriteError::InvalidConfig(m.into()));
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be >= 1");
        }
        if self.max_input_tokens == 0 {
            return bad("max_input_tokens must be >= 1");
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be >= 1");
        }
        if url::Url::parse(&self.endpoint_url).is_err() {
            return bad("endpoint_url is not a valid URL");
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }

    /// Full-jitter exponential backoff before retry number `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let exp = self
            .backoff_base_ms
            .saturating_mul(1u64 << (attempt.saturating_sub(1)).min(32));
        let ceiling = exp.min(self.backoff_cap_ms);
        if ceiling == 0 {
            return Duration::ZERO;
        }
        Duration::from_millis(rand::rng().random_range(0..=ceiling))
    }
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub content: String,
    pub finish_reason: Option<String>,
}

#[derive(Debug, Clone)]
pub enum AttemptError {
    /// Transport failure, 429, 5xx, or an unusable response body.
    Retryable { status: Option<u16>, reason: String },
    /// Any other 4xx.
    Fatal { status: u16, reason: String },
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

pub struct ChatClient {
    http: reqwest::Client,
    url: String,
    api_key: Option<String>,
    cfg: GenerationConfig,
    requests: AtomicU64,
    any_response: AtomicBool,
}

impl ChatClient {
    pub fn new(cfg: &GenerationConfig) -> Result<Self, RewriteError> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.request_timeout_secs.max(1)))
            .build()
            .map_err(|e| RewriteError::InvalidConfig(format!("http client: {e}")))?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(ChatClient {
            http,
            url: cfg.completions_url(),
            api_key,
            cfg: cfg.clone(),
            requests: AtomicU64::new(0),
            any_response: AtomicBool::new(false),
        })
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.cfg
    }

    pub fn requests_issued(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// Whether any HTTP response (of any status) has been received.
    pub fn endpoint_seen(&self) -> bool {
        self.any_response.load(Ordering::SeqCst)
    }

    /// Reserve one request against the optional cap.
    pub fn try_reserve(&self) -> bool {
        let n = self.requests.fetch_add(1, Ordering::SeqCst) + 1;
        match self.cfg.max_requests {
            Some(cap) if n > cap => {
                self.requests.fetch_sub(1, Ordering::SeqCst);
                false
            }
            _ => true,
        }
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        let mut body = json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
            "max_tokens": self.cfg.max_tokens,
        });
        if let Some(seed) = self.cfg.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    /// One HTTP round trip, without retry.
    pub async fn complete_once(&self, prompt: &str) -> Result<Completion, AttemptError> {
        let mut req = self.http.post(&self.url).json(&self.request_body(prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| AttemptError::Retryable {
            status: None,
            reason: format!("transport: {e}"),
        })?;
        self.any_response.store(true, Ordering::SeqCst);
        let status = resp.status();
        if !status.is_success() {
            let code = status.as_u16();
            let body = resp.text().await.unwrap_or_default();
            let reason = format!("HTTP {code}: {}", body.chars().take(200).collect::<String>());
            return Err(if code == 429 || status.is_server_error() {
                AttemptError::Retryable {
                    status: Some(code),
                    reason,
                }
            } else {
                AttemptError::Fatal { status: code, reason }
            });
        }
        let code = status.as_u16();
        let parsed: ChatResponse = resp.json().await.map_err(|e| AttemptError::Retryable {
            status: Some(code),
            reason: format!("bad response body: {e}"),
        })?;
        let choice = parsed.choices.into_iter().next().ok_or(AttemptError::Retryable {
            status: Some(code),
            reason: "response has no choices".into(),
        })?;
        Ok(Completion {
            content: choice.message.content.unwrap_or_default(),
            finish_reason: choice.finish_reason,
        })
    }
}
