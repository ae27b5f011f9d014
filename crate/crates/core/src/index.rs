//! Exact top-k cosine search over a small, immutable set of documents, plus
//! its on-disk form.
//!
//! File layout, all little-endian:
//!
//! ```text
//! "LRIX" | version u16 | dim u32 | count u32 | checksum u64
//! body:  count * dim f64 vector block (entry order)
//!        provider tag, then per entry doc_id, text, url (each u32 length + UTF-8)
//! ```
//!
//! The checksum is the first 8 bytes of SHA-256 over the body.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binfmt::{checksum, Reader, Writer};
use crate::embedding::{EmbeddingVector, VectorSet};
use crate::ingest::{format_document, Corpus};

const MAGIC: &[u8; 4] = b"LRIX";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;

pub const DEFAULT_TOP_K: usize = 2;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),
    #[error("no vector for doc_id {0}")]
    MissingVector(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub doc_id: String,
    pub vector: EmbeddingVector,
    /// The formatted `"<lab name>: <normal results>"` document.
    pub text: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub doc_id: String,
    pub score: f64,
    pub text: String,
    pub url: String,
    pub rank: usize,
}

impl RetrievalHit {
    /// The lab name part of the document text.
    pub fn lab_name(&self) -> &str {
        self.text.split_once(": ").map_or(self.text.as_str(), |(name, _)| name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    provider_tag: String,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    /// Entries are stored in `doc_id` order regardless of input order.
    pub fn build(mut entries: Vec<IndexEntry>) -> Result<Self, IndexError> {
        let first = entries.first().ok_or(IndexError::EmptyIndex)?;
        let dim = first.vector.dim();
        let provider_tag = first.vector.provider_tag().to_string();
        let mut ids = BTreeSet::new();
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(IndexError::DimMismatch {
                    expected: dim,
                    got: e.vector.dim(),
                });
            }
            if !ids.insert(e.doc_id.as_str()) {
                return Err(IndexError::DuplicateDocId(e.doc_id.clone()));
            }
        }
        entries.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Ok(Self {
            dim,
            provider_tag,
            entries,
        })
    }

    /// Pair every corpus document with its vector.
    pub fn from_corpus(corpus: &Corpus, vectors: VectorSet) -> Result<Self, IndexError> {
        let mut by_id: HashMap<String, EmbeddingVector> = HashMap::with_capacity(vectors.entries.len());
        for (id, v) in vectors.entries {
            if by_id.insert(id.clone(), v).is_some() {
                return Err(IndexError::DuplicateDocId(id));
            }
        }
        let entries = corpus
            .docs()
            .iter()
            .map(|doc| {
                let vector = by_id
                    .remove(doc.doc_id())
                    .ok_or_else(|| IndexError::MissingVector(doc.doc_id().to_string()))?;
                Ok(IndexEntry {
                    doc_id: doc.doc_id().to_string(),
                    vector,
                    text: format_document(doc),
                    url: doc.url().to_string(),
                })
            })
            .collect::<Result<Vec<_>, IndexError>>()?;
        if let Some(extra) = by_id.keys().min() {
            tracing::warn!("{} vectors have no corpus document (e.g. {extra})", by_id.len());
        }
        Self::build(entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, doc_id: &str) -> Option<&IndexEntry> {
        self.entries
            .binary_search_by(|e| e.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// The `min(k, len)` best entries by dot product (= cosine for unit
    /// vectors), score descending, ties by `doc_id` ascending.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, IndexError> {
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut scored: Vec<(f64, &IndexEntry)> =
            self.entries.iter().map(|e| (query.dot(e.vector.values()), e)).collect();
        scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.doc_id.cmp(&b.doc_id)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (score, e))| RetrievalHit {
                doc_id: e.doc_id.clone(),
                score: score.clamp(-1.0, 1.0),
                text: e.text.clone(),
                url: e.url.clone(),
                rank: i + 1,
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Writer::default();
        for e in &self.entries {
            for &x in e.vector.values() {
                body.f64(x);
            }
        }
        body.str(&self.provider_tag);
        for e in &self.entries {
            body.str(&e.doc_id);
            body.str(&e.text);
            body.str(&e.url);
        }
        let mut out = Writer::default();
        out.buf.extend_from_slice(MAGIC);
        out.u16(VERSION);
        out.u32(self.dim as u32);
        out.u32(self.entries.len() as u32);
        out.u64(checksum(&body.buf));
        out.buf.extend_from_slice(&body.buf);
        out.buf
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        if path.as_os_str().is_empty() {
            return Err(IndexError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "empty index path",
            )));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, IndexError> {
        let corrupt = |m: String| IndexError::CorruptIndex(m);
        if data.len() < HEADER_LEN {
            return Err(corrupt(format!(
                "file is {} bytes, shorter than the header",
                data.len()
            )));
        }
        let mut r = Reader::new(data);
        if r.bytes(4) != Some(MAGIC.as_slice()) {
            return Err(corrupt("bad magic".into()));
        }
        let header = (|| Some((r.u16()?, r.u32()? as usize, r.u32()? as usize, r.u64()?)))();
        let (version, dim, count, sum) = header.ok_or_else(|| corrupt("truncated header".into()))?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let body = &data[HEADER_LEN..];
        if checksum(body) != sum {
            return Err(corrupt("checksum mismatch".into()));
        }
        let mut r = Reader::new(body);
        let truncated = || IndexError::CorruptIndex("body truncated".into());
        let block = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(truncated)?;
        let mut vectors = r.bytes(block).ok_or_else(truncated)?.chunks_exact(8);
        let tag = r.str().ok_or_else(truncated)?.to_string();
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let values: Vec<f64> = vectors
                .by_ref()
                .take(dim)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            let doc_id = r.str().ok_or_else(truncated)?.to_string();
            let text = r.str().ok_or_else(truncated)?.to_string();
            let url = r.str().ok_or_else(truncated)?.to_string();
            let vector = EmbeddingVector::from_unit(values, tag.clone())
                .ok_or_else(|| corrupt(format!("vector {i} ({doc_id}) is not unit-norm")))?;
            entries.push(IndexEntry {
                doc_id,
                vector,
                text,
                url,
            });
        }
        if r.remaining() != 0 {
            return Err(corrupt("trailing bytes after last entry".into()));
        }
        let index = Self::build(entries).map_err(|e| corrupt(e.to_string()))?;
        if index.dim != dim {
            return Err(corrupt("dim field disagrees with vectors".into()));
        }
        Ok(index)
    }
}

/// Descending by score, then ascending by doc_id.
pub fn hit_order(a: &RetrievalHit, b: &RetrievalHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id))
}
