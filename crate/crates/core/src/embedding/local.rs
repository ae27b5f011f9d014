//! Hashed character 3-gram embedder.
//!
//! The text is lowercased and split into overlapping 3-grams of Unicode
//! scalar values (a text shorter than 3 characters is a single gram). Each
//! gram's UTF-8 bytes are hashed with 64-bit FNV-1a and counted into bucket
//! `hash % dim`. The count histogram is L2-normalized.

use super::{Embedder, EmbeddingError, EmbeddingVector};

pub(super) const DEFAULT_DIM: usize = 512;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalHashEmbedder {
    dim: usize,
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl LocalHashEmbedder {
    /// # Panics
    /// If `dim` is zero.
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        Self { dim }
    }

    /// Raw bucket counts before normalization.
    pub fn histogram(&self, text: &str) -> Vec<f64> {
        let lower: Vec<char> = text.to_lowercase().chars().collect();
        let mut counts = vec![0.0; self.dim];
        let mut gram_buf = String::with_capacity(12);
        let mut add = |gram: &[char]| {
            gram_buf.clear();
            gram_buf.extend(gram);
            counts[(fnv1a64(gram_buf.as_bytes()) % self.dim as u64) as usize] += 1.0;
        };
        if lower.len() < 3 {
            add(&lower);
        } else {
            lower.windows(3).for_each(add);
        }
        counts
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

impl Embedder for LocalHashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provider_tag(&self) -> String {
        format!("local-hash-3gram-fnv1a:{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        EmbeddingVector::normalized(self.histogram(text), self.provider_tag())
    }
}
