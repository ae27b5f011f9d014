//! Text → unit-norm vectors. Two providers: a remote JSON embedding API and a
//! deterministic local hashing embedder used for offline work and tests.

mod local;
mod remote;
mod vectors;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{format_document, Corpus};

pub use local::LocalHashEmbedder;
pub use remote::RemoteEmbedder;
pub use vectors::{read_vectors, write_vectors, VectorFileError, VectorSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("api key missing or rejected: {0}")]
    Auth(String),
    #[error("embedding request failed after {attempts} attempt(s): {message}")]
    Remote {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("provider returned a vector of dim {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("provider returned an all-zero vector")]
    ZeroVector,
    #[error("invalid embedding config: {0}")]
    Config(String),
    #[error("text {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<EmbeddingError>,
    },
}

/// A unit-norm vector tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    provider_tag: String,
}

impl EmbeddingVector {
    /// L2-normalizes `values`.
    pub fn normalized(mut values: Vec<f64>, provider_tag: impl Into<String>) -> Result<Self, EmbeddingError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::ZeroVector);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self {
            values,
            provider_tag: provider_tag.into(),
        })
    }

    /// Wraps values that are already unit-norm (within 1e-6), e.g. read back from disk.
    pub fn from_unit(values: Vec<f64>, provider_tag: impl Into<String>) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        ((norm - 1.0).abs() <= 1e-6).then(|| Self {
            values,
            provider_tag: provider_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifies provider, model and dimension; stored in vector and index files.
    fn provider_tag(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;

    /// Same result as mapping [`Embedder::embed`] over `texts`, in order.
    /// Errors carry the index of the failing text.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.embed(t).map_err(|e| EmbeddingError::Batch {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    Remote,
    LocalHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingProviderConfig {
    pub kind: EmbeddingKind,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
}

fn default_model() -> String {
    "text-embedding-3-large".into()
}

fn default_max_inflight() -> usize {
    4
}

pub const DEFAULT_EMBEDDING_ENDPOINT: &str = "https://api.openai.com/v1/embeddings";
pub const DEFAULT_EMBEDDING_KEY_ENV: &str = "EMBEDDING_API_KEY";

impl EmbeddingProviderConfig {
    pub fn local_hash() -> Self {
        Self {
            kind: EmbeddingKind::LocalHash,
            model_name: default_model(),
            endpoint_url: None,
            api_key_env: None,
            dim: None,
            max_inflight: default_max_inflight(),
        }
    }

    pub fn remote() -> Self {
        Self {
            kind: EmbeddingKind::Remote,
            endpoint_url: Some(DEFAULT_EMBEDDING_ENDPOINT.into()),
            api_key_env: Some(DEFAULT_EMBEDDING_KEY_ENV.into()),
            ..Self::local_hash()
        }
    }

    pub fn effective_dim(&self) -> usize {
        self.dim.unwrap_or(match self.kind {
            EmbeddingKind::Remote => 3072,
            EmbeddingKind::LocalHash => local::DEFAULT_DIM,
        })
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbeddingError> {
        let dim = self.effective_dim();
        if dim == 0 {
            return Err(EmbeddingError::Config("dim must be positive".into()));
        }
        match self.kind {
            EmbeddingKind::LocalHash => Ok(Arc::new(LocalHashEmbedder::new(dim))),
            EmbeddingKind::Remote => {
                let endpoint = self
                    .endpoint_url
                    .clone()
                    .ok_or_else(|| EmbeddingError::Config("remote embedding needs endpoint_url".into()))?;
                let key_env = self
                    .api_key_env
                    .clone()
                    .ok_or_else(|| EmbeddingError::Config("remote embedding needs api_key_env".into()))?;
                let key = std::env::var(&key_env)
                    .ok()
                    .filter(|k| !k.trim().is_empty())
                    .ok_or_else(|| EmbeddingError::Auth(format!("environment variable {key_env} is not set")))?;
                Ok(Arc::new(RemoteEmbedder::new(
                    &endpoint,
                    &self.model_name,
                    dim,
                    key,
                    self.max_inflight,
                )?))
            }
        }
    }
}

/// Embed every document's formatted text, keyed by `doc_id`, in corpus order.
pub fn embed_corpus(
    corpus: &Corpus,
    embedder: &dyn Embedder,
) -> Result<Vec<(String, EmbeddingVector)>, EmbeddingError> {
    let texts: Vec<String> = corpus.docs().iter().map(format_document).collect();
    let vectors = embedder.embed_batch(&texts)?;
    Ok(corpus
        .docs()
        .iter()
        .map(|d| d.doc_id().to_string())
        .zip(vectors)
        .collect())
}
