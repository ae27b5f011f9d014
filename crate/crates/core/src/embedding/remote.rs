//! Client for a hosted embedding API speaking the common
//! `{model, input: [...]} -> {data: [{index, embedding}]}` JSON shape.

use std::fmt;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Embedder, EmbeddingError, EmbeddingVector};
use crate::http::{post_json, HttpFailure, InflightLimit, RetryPolicy, Secret};

/// Texts sent per request by `embed_batch`.
const MAX_BATCH: usize = 64;

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    dim: usize,
    key: Secret,
    retry: RetryPolicy,
    inflight: InflightLimit,
}

impl fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("dim", &self.dim)
            .field("key", &self.key)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct Response {
    data: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    index: usize,
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: &str,
        model: &str,
        dim: usize,
        api_key: String,
        max_inflight: usize,
    ) -> Result<Self, EmbeddingError> {
        url::Url::parse(endpoint).map_err(|e| EmbeddingError::Config(format!("bad endpoint_url {endpoint:?}: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EmbeddingError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            dim,
            key: Secret::new(api_key),
            retry: RetryPolicy::default(),
            inflight: InflightLimit::new(max_inflight),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn request(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let body = json!({ "model": self.model, "input": texts, "dimensions": self.dim });
        let value = {
            let _permit = self.inflight.acquire();
            post_json(&self.client, &self.endpoint, &self.key, &body, &self.retry).map_err(map_failure)?
        };
        let decode = |message: String| EmbeddingError::Remote {
            status: None,
            attempts: 1,
            message,
        };
        let mut resp: Response =
            serde_json::from_value(value).map_err(|e| decode(format!("unexpected response shape: {e}")))?;
        if resp.data.len() != texts.len() {
            return Err(decode(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            )));
        }
        resp.data.sort_by_key(|item| item.index);
        if resp.data.iter().enumerate().any(|(i, item)| item.index != i) {
            return Err(decode("response indices are not 0..n".into()));
        }
        let tag = self.provider_tag();
        resp.data
            .into_iter()
            .map(|item| {
                if item.embedding.len() != self.dim {
                    return Err(EmbeddingError::DimMismatch {
                        expected: self.dim,
                        got: item.embedding.len(),
                    });
                }
                EmbeddingVector::normalized(item.embedding, tag.clone())
            })
            .collect()
    }
}

fn map_failure(f: HttpFailure) -> EmbeddingError {
    match f {
        HttpFailure::Auth { status } => EmbeddingError::Auth(format!("embedding endpoint answered HTTP {status}")),
        HttpFailure::Status { status, attempts, body } => EmbeddingError::Remote {
            status: Some(status),
            attempts,
            message: format!("HTTP {status}: {}", body.chars().take(200).collect::<String>()),
        },
        HttpFailure::Transport { attempts, message } => EmbeddingError::Remote {
            status: None,
            attempts,
            message,
        },
        HttpFailure::Decode(message) => EmbeddingError::Remote {
            status: None,
            attempts: 1,
            message,
        },
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provider_tag(&self) -> String {
        format!("remote:{}:{}", self.model, self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        let mut out = self.request(&[text.to_string()])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::Batch {
                index,
                source: Box::new(EmbeddingError::EmptyInput),
            });
        }
        let mut out = Vec::with_capacity(texts.len());
        for (chunk_no, chunk) in texts.chunks(MAX_BATCH).enumerate() {
            let vectors = self.request(chunk).map_err(|e| EmbeddingError::Batch {
                index: chunk_no * MAX_BATCH,
                source: Box::new(e),
            })?;
            out.extend(vectors);
        }
        Ok(out)
    }
}
