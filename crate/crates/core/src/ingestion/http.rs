//! Blocking client for the embedding service.
//!
//! Wire contract: `POST <endpoint>` with `{"texts": [...]}`; a 200 reply
//! carries `{"embeddings": [[...], ...], "dim": d}` in request order. Any
//! other status, or a transport error, is treated as transient.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug)]
pub struct HttpEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    max_retries: u32,
    backoff: Duration,
    requests: AtomicU64,
    retries: AtomicU64,
}

enum Attempt {
    Transient { status: Option<u16>, detail: String },
    Fatal(String),
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, timeout: Duration, max_retries: u32, backoff: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.to_string(),
            max_retries,
            backoff,
            requests: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        }
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    /// Embeds one batch, retrying transient failures with exponential backoff.
    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, IngestError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.try_once(texts) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(detail)) => {
                    return Err(self.failure(attempt, None, detail));
                }
                Err(Attempt::Transient { status, detail }) => {
                    if attempt > self.max_retries {
                        return Err(self.failure(attempt, status, detail));
                    }
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
                }
            }
        }
    }

    fn failure(&self, attempts: u32, status: Option<u16>, detail: String) -> IngestError {
        IngestError::Http {
            endpoint: self.endpoint.clone(),
            attempts,
            status,
            detail,
        }
    }

    fn try_once(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, Attempt> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let body = EmbedRequest {
            texts: texts.to_vec(),
        };
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| Attempt::Transient {
                status: None,
                detail: e.to_string(),
            })?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(Attempt::Transient {
                status: Some(status),
                detail: format!("status {status}"),
            });
        }
        let parsed: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(format!("malformed response body: {e}")))?;
        if parsed.embeddings.len() != texts.len() {
            return Err(Attempt::Fatal(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.embeddings.len()
            )));
        }
        if let Some(bad) = parsed.embeddings.iter().position(|e| e.len() != parsed.dim) {
            return Err(Attempt::Fatal(format!(
                "embedding {bad} has length {}, response declared dim {}",
                parsed.embeddings[bad].len(),
                parsed.dim
            )));
        }
        Ok(parsed.embeddings)
    }
}
