//! Client for an external sentence-embedding service.
//!
//! Contract: `POST {endpoint}` with `{"sentences": ["..."]}`, answered by
//! `{"embeddings": [[...], ...]}` holding one vector per sentence in order.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::similarity::EmbeddingProvider;
use super::{MetricsError, Result};

/// Environment variable that overrides the configured endpoint.
pub const ENDPOINT_ENV: &str = "SEMCOM_EMBED_ENDPOINT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpEmbeddingConfig {
    pub endpoint: String,
    /// Expected vector length; `None` accepts whatever the first response carries.
    pub dimension: Option<usize>,
    pub timeout_ms: u64,
    /// Sentences per request, at most 64.
    pub max_batch: usize,
    pub retries: usize,
    /// First backoff delay; doubled after every failed attempt.
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpEmbeddingConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            dimension: None,
            timeout_ms: 10_000,
            max_batch: 64,
            retries: 3,
            backoff_ms: 250,
            max_in_flight: 4,
        }
    }
}

impl HttpEmbeddingConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            ..Self::default()
        }
    }

    /// Replace the endpoint with `SEMCOM_EMBED_ENDPOINT` when it is set and non-empty.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(e) = std::env::var(ENDPOINT_ENV) {
            if !e.trim().is_empty() {
                self.endpoint = e.trim().to_string();
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() {
            return Err(MetricsError::Config("embedding endpoint is empty".into()));
        }
        if !(1..=64).contains(&self.max_batch) {
            return Err(MetricsError::Config(format!("max_batch {} outside 1..=64", self.max_batch)));
        }
        if self.max_in_flight == 0 {
            return Err(MetricsError::Config("max_in_flight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Request<'a> {
    sentences: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    embeddings: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct HttpEmbedding {
    config: HttpEmbeddingConfig,
    agent: Agent,
}

impl HttpEmbedding {
    pub fn new(config: HttpEmbeddingConfig) -> Result<Self> {
        config.validate()?;
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &HttpEmbeddingConfig {
        &self.config
    }

    fn attempt(&self, batch: &[String]) -> std::result::Result<Vec<Vec<f64>>, Attempt> {
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .send_json(Request { sentences: batch })
            .map_err(|e| Attempt::Retry(MetricsError::Transport {
                attempts: 0,
                message: e.to_string(),
            }))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| {
            Attempt::Retry(MetricsError::Transport {
                attempts: 0,
                message: e.to_string(),
            })
        })?;
        if status != 200 {
            let err = MetricsError::Status { status, body };
            return Err(if status >= 500 || status == 429 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let parsed: Response =
            serde_json::from_str(&body).map_err(|e| Attempt::Fatal(MetricsError::Malformed(e.to_string())))?;
        if parsed.embeddings.len() != batch.len() {
            return Err(Attempt::Fatal(MetricsError::CountMismatch {
                expected: batch.len(),
                count: parsed.embeddings.len(),
            }));
        }
        Ok(parsed.embeddings)
    }

    /// One batch with retries and exponential backoff.
    fn request(&self, batch: &[String]) -> Result<Vec<Vec<f64>>> {
        let attempts = self.config.retries + 1;
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        for i in 1..=attempts {
            match self.attempt(batch) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    let e = match e {
                        MetricsError::Transport { message, .. } => MetricsError::Transport { attempts: i, message },
                        e => e,
                    };
                    if i == attempts {
                        return Err(e);
                    }
                    log::warn!("embedding request attempt {i}/{attempts} failed: {e}");
                    thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

enum Attempt {
    Retry(MetricsError),
    Fatal(MetricsError),
}

impl EmbeddingProvider for HttpEmbedding {
    fn dimension(&self) -> usize {
        self.config.dimension.unwrap_or(0)
    }

    fn embed(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>> {
        let batches: Vec<&[String]> = sentences.chunks(self.config.max_batch).collect();
        let mut out = Vec::with_capacity(sentences.len());
        for wave in batches.chunks(self.config.max_in_flight) {
            let results: Vec<Result<Vec<Vec<f64>>>> = thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|b| s.spawn(|| self.request(b))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        let mut expected = self.config.dimension;
        for v in &out {
            match expected {
                Some(d) if d != v.len() => {
                    return Err(MetricsError::DimensionMismatch {
                        expected: d,
                        got: v.len(),
                    })
                }
                None => expected = Some(v.len()),
                _ => {}
            }
        }
        Ok(out)
    }
}
