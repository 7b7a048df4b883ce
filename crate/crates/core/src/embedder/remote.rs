//! HTTP client for an embedding service.
//!
//! `POST {endpoint}/v1/embeddings` with `{"model", "input", "role"}` answers
//! `{"data": [{"index", "embedding"}], "dim"}`; errors carry `{"error": string}`.
//! `GET {endpoint}/health` answers `{"status": "ok", "model", "dim"}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingBackend, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Base delay between attempts; doubles on each retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_batch_size() -> usize {
    32
}
fn default_retries() -> u32 {
    3
}
fn default_parallelism() -> usize {
    2
}
fn default_timeout() -> u64 {
    120
}
fn default_backoff() -> u64 {
    250
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            batch_size: default_batch_size(),
            max_retries: default_retries(),
            parallelism: default_parallelism(),
            timeout_secs: default_timeout(),
            backoff_ms: default_backoff(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingRequest<'a> {
    pub model: &'a str,
    pub input: Vec<&'a str>,
    pub role: Role,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingDatum {
    pub index: usize,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub data: Vec<EmbeddingDatum>,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub status: String,
    pub model: String,
    pub dim: usize,
}

pub struct RemoteBackend {
    id: String,
    dim: usize,
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    requests: AtomicUsize,
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl RemoteBackend {
    pub fn new(id: impl Into<String>, dim: usize, cfg: RemoteConfig) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.parallelism == 0 {
            return Err(Error::Config("batch_size and parallelism must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(RemoteBackend {
            id: id.into(),
            dim,
            cfg,
            client,
            requests: AtomicUsize::new(0),
        })
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.cfg.endpoint.trim_end_matches('/'))
    }

    pub fn health(&self) -> Result<HealthStatus> {
        let resp = self
            .client
            .get(self.url("/health"))
            .send()
            .map_err(|e| Error::Transport { failed: vec![], message: e.to_string() })?;
        if !resp.status().is_success() {
            return Err(Error::Transport {
                failed: vec![],
                message: format!("health check returned {}", resp.status()),
            });
        }
        resp.json()
            .map_err(|e| Error::Transport { failed: vec![], message: format!("bad health body: {e}") })
    }

    fn post_once(&self, chunk: &[&str], role: Role) -> std::result::Result<Vec<Vec<f32>>, Attempt> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let body = EmbeddingRequest {
            model: &self.cfg.model,
            input: chunk.to_vec(),
            role,
        };
        let resp = match self.client.post(self.url("/v1/embeddings")).json(&body).send() {
            Ok(r) => r,
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let status = resp.status();
        if !status.is_success() {
            let detail = resp
                .json::<ErrorBody>()
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from("<no error body>"));
            let message = format!("HTTP {status}: {detail}");
            return if status.is_server_error() || status.as_u16() == 429 {
                Err(Attempt::Retry(message))
            } else {
                Err(Attempt::Fatal(Error::Transport {
                    failed: (0..chunk.len()).collect(),
                    message,
                }))
            };
        }
        let parsed: EmbeddingResponse = resp
            .json()
            .map_err(|e| Attempt::Retry(format!("undecodable response: {e}")))?;
        self.unpack(parsed, chunk.len()).map_err(Attempt::Fatal)
    }

    fn unpack(&self, resp: EmbeddingResponse, n: usize) -> Result<Vec<Vec<f32>>> {
        if resp.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: resp.dim,
            });
        }
        if resp.data.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: resp.data.len(),
            });
        }
        let mut out: Vec<Option<Vec<f32>>> = vec![None; n];
        for d in resp.data {
            if d.embedding.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: d.embedding.len(),
                });
            }
            match out.get_mut(d.index) {
                Some(slot @ None) => *slot = Some(d.embedding),
                _ => {
                    return Err(Error::Transport {
                        failed: (0..n).collect(),
                        message: format!("response index {} invalid or repeated", d.index),
                    })
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("all indices present")).collect())
    }

    fn post_with_retries(&self, chunk: &[&str], role: Role) -> Result<Vec<Vec<f32>>> {
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 && self.cfg.backoff_ms > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(10));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.post_once(chunk, role) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("{}: attempt {} failed: {msg}", self.id, attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::Transport {
            failed: (0..chunk.len()).collect(),
            message: format!("gave up after {} attempts: {last}", self.cfg.max_retries + 1),
        })
    }
}

impl EmbeddingBackend for RemoteBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[&str], role: Role) -> Result<Vec<Vec<f32>>> {
        let chunks: Vec<(usize, &[&str])> = texts
            .chunks(self.cfg.batch_size)
            .enumerate()
            .map(|(i, c)| (i * self.cfg.batch_size, c))
            .collect();
        let mut results: Vec<Option<Result<Vec<Vec<f32>>>>> = (0..chunks.len()).map(|_| None).collect();

        for wave in chunks.chunks(self.cfg.parallelism).zip(results.chunks_mut(self.cfg.parallelism)) {
            let (work, slots) = wave;
            std::thread::scope(|s| {
                let handles: Vec<_> = work
                    .iter()
                    .map(|(_, chunk)| s.spawn(move || self.post_with_retries(chunk, role)))
                    .collect();
                for (slot, h) in slots.iter_mut().zip(handles) {
                    *slot = Some(h.join().expect("embedding worker panicked"));
                }
            });
        }

        let mut out = Vec::with_capacity(texts.len());
        let mut failed = Vec::new();
        let mut message = String::new();
        for ((offset, _), result) in chunks.iter().zip(results) {
            match result.expect("every chunk attempted") {
                Ok(vs) => out.extend(vs),
                Err(Error::Transport { failed: f, message: m }) => {
                    failed.extend(f.into_iter().map(|i| i + offset));
                    message = m;
                }
                Err(other) => return Err(other),
            }
        }
        if !failed.is_empty() {
            return Err(Error::Transport { failed, message });
        }
        Ok(out)
    }
}
