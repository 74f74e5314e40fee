use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use biaseval_core::scoring::{
    decode_response, Compatibility, Metric, ScoreRequest, ScoreValue, ScoringError, WireResponse,
};
use biaseval_core::Language;
use futures::future::try_join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub const CORRELATION_HEADER: &str = "x-correlation-id";

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("scorer gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("scorer replied to request {sent} with correlation id {got}")]
    Correlation { sent: String, got: String },
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    /// Full URL of the scorer's `/score` route.
    pub endpoint: String,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
    /// Maximum batches in flight.
    pub concurrency: usize,
    pub batch_size: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8090/score".into(),
            max_retries: 3,
            initial_backoff_ms: 200,
            timeout_secs: 300,
            concurrency: 4,
            batch_size: 32,
        }
    }
}

/// Client for the external `/score` protocol.
#[derive(Clone)]
pub struct ScorerClient {
    http: reqwest::Client,
    config: ScorerConfig,
    compat: Compatibility,
    slots: Arc<Semaphore>,
    next_id: Arc<AtomicU64>,
}

impl ScorerClient {
    pub fn new(config: ScorerConfig, compat: Compatibility) -> Result<Self, ScorerError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()?;
        Ok(Self {
            http,
            slots: Arc::new(Semaphore::new(config.concurrency.max(1))),
            next_id: Arc::new(AtomicU64::new(1)),
            compat,
            config,
        })
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn compatibility(&self) -> &Compatibility {
        &self.compat
    }

    /// Scores one batch. Compatibility is checked before anything is sent;
    /// an empty batch returns immediately.
    pub async fn score_batch(&self, req: &ScoreRequest) -> Result<Vec<ScoreValue>, ScorerError> {
        self.compat.check(req.metric, req.language)?;
        if req.texts.is_empty() {
            return Ok(Vec::new());
        }
        let _slot = self.slots.acquire().await.expect("semaphore never closed");
        let id = self.next_id.fetch_add(1, Ordering::Relaxed).to_string();
        let mut attempt = 0u32;
        loop {
            let last = match self.http.post(&self.config.endpoint).header(CORRELATION_HEADER, &id).json(req).send().await {
                Ok(resp) if resp.status().is_success() => {
                    if let Some(got) = resp.headers().get(CORRELATION_HEADER) {
                        let got = got.to_str().unwrap_or_default();
                        if got != id {
                            return Err(ScorerError::Correlation {
                                sent: id,
                                got: got.to_string(),
                            });
                        }
                    }
                    let body = resp.text().await?;
                    let wire: WireResponse = serde_json::from_str(&body).map_err(|e| ScoringError::Protocol {
                        reason: e.to_string(),
                        payload: body.clone(),
                    })?;
                    return Ok(decode_response(req, &wire)?);
                }
                Ok(resp) if resp.status().is_client_error() => {
                    let status = resp.status();
                    let body = resp.text().await.unwrap_or_default();
                    return Err(ScoringError::Protocol {
                        reason: format!("HTTP {status}"),
                        payload: body,
                    }
                    .into());
                }
                Ok(resp) => format!("HTTP {}", resp.status()),
                Err(e) => e.to_string(),
            };
            if attempt >= self.config.max_retries {
                return Err(ScorerError::Exhausted {
                    attempts: attempt + 1,
                    last,
                });
            }
            let wait = self.config.initial_backoff_ms.saturating_mul(1 << attempt.min(16));
            tokio::time::sleep(Duration::from_millis(wait)).await;
            attempt += 1;
        }
    }

    /// Splits `texts` into batches of `batch_size`, sends them concurrently
    /// and reassembles the results in input order.
    pub async fn score_texts(
        &self,
        metric: Metric,
        language: Language,
        texts: &[String],
    ) -> Result<Vec<ScoreValue>, ScorerError> {
        self.compat.check(metric, language)?;
        let batches = texts.chunks(self.config.batch_size.max(1)).map(|chunk| {
            let req = ScoreRequest {
                metric,
                language,
                texts: chunk.to_vec(),
            };
            async move { self.score_batch(&req).await }
        });
        Ok(try_join_all(batches).await?.into_iter().flatten().collect())
    }
}
