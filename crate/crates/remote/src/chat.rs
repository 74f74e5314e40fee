use std::num::NonZeroU32;
use std::sync::Arc;
use std::time::Duration;

use governor::{DefaultDirectRateLimiter, Quota, RateLimiter};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

/// Environment variable holding the bearer token for the chat endpoint.
pub const API_KEY_ENV: &str = "BIASEVAL_API_KEY";

/// Temperature used for every annotation request.
pub const ANNOTATION_TEMPERATURE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("temperature must lie in [0, 2], got {0}")]
    Temperature(f64),
    #[error("chat endpoint rejected the credentials (HTTP {0})")]
    Auth(u16),
    #[error("chat endpoint rejected the request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("giving up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("malformed chat response: {0}")]
    Protocol(String),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

impl ChatError {
    /// Errors that must stop a whole run rather than a single slot.
    pub fn is_fatal(&self) -> bool {
        matches!(self, ChatError::Auth(_) | ChatError::Client(_) | ChatError::Temperature(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Token-bucket rate with a bucket of one, so requests are evenly
    /// spaced; 0 disables limiting.
    pub requests_per_minute: u32,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8089/v1".into(),
            model: "gpt-3.5-turbo".into(),
            requests_per_minute: 60,
            max_retries: 5,
            initial_backoff_ms: 500,
            timeout_secs: 120,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Wire body of a chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    /// Content of the last user message.
    pub fn prompt(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

enum Failure {
    Retry(String),
    Stop(ChatError),
}

/// Rate-limited chat-completion client with retries.
#[derive(Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    config: ChatConfig,
    api_key: Option<String>,
    limiter: Option<Arc<DefaultDirectRateLimiter>>,
    in_flight: Arc<Semaphore>,
}

impl ChatClient {
    pub fn new(config: ChatConfig, api_key: Option<String>) -> Result<Self, ChatError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()?;
        let limiter = NonZeroU32::new(config.requests_per_minute)
            .map(|rpm| Arc::new(RateLimiter::direct(Quota::per_minute(rpm).allow_burst(NonZeroU32::MIN))));
        Ok(Self {
            http,
            in_flight: Arc::new(Semaphore::new(config.max_in_flight.max(1))),
            limiter,
            api_key,
            config,
        })
    }

    /// Reads the key from [`API_KEY_ENV`] if set.
    pub fn from_env(config: ChatConfig) -> Result<Self, ChatError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(config, key)
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }

    /// Single-turn request with one user message.
    pub async fn ask(&self, temperature: f64, prompt: impl Into<String>) -> Result<String, ChatError> {
        self.complete(temperature, vec![Message::user(prompt)]).await
    }

    /// Sends one request and returns `choices[0].message.content`.
    ///
    /// Transport errors, HTTP 429 and 5xx are retried with exponential
    /// backoff up to `max_retries` times; 401/403 fail immediately.
    pub async fn complete(&self, temperature: f64, messages: Vec<Message>) -> Result<String, ChatError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(ChatError::Temperature(temperature));
        }
        let body = ChatRequest {
            model: self.config.model.clone(),
            temperature,
            messages,
        };
        let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
        let mut attempt = 0u32;
        loop {
            if let Some(l) = &self.limiter {
                l.until_ready().await;
            }
            match self.send(&body).await {
                Ok(text) => return Ok(text),
                Err(Failure::Stop(e)) => return Err(e),
                Err(Failure::Retry(last)) => {
                    if attempt >= self.config.max_retries {
                        return Err(ChatError::Exhausted {
                            attempts: attempt + 1,
                            last,
                        });
                    }
                    let wait = self.config.initial_backoff_ms.saturating_mul(1 << attempt.min(16));
                    tokio::time::sleep(Duration::from_millis(wait)).await;
                    attempt += 1;
                }
            }
        }
    }

    async fn send(&self, body: &ChatRequest) -> Result<String, Failure> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(Failure::Stop(ChatError::Auth(status.as_u16())));
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Failure::Retry(format!("HTTP {status}")));
        }
        let text = resp.text().await.map_err(|e| Failure::Retry(e.to_string()))?;
        if !status.is_success() {
            return Err(Failure::Stop(ChatError::Rejected {
                status: status.as_u16(),
                body: text,
            }));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Failure::Stop(ChatError::Protocol(format!("{e}: {text}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Failure::Stop(ChatError::Protocol(format!("no choices: {text}"))))
    }
}
