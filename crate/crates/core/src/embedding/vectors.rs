//! `vectors.bin`: the output of `labrag embed`.
//!
//! Layout, all little-endian: magic `LRVE`, version u16, dim u32, count u32,
//! provider tag (u32 length + UTF-8), then per entry the doc_id (u32 length +
//! UTF-8) followed by `dim` f64 values.

use std::path::Path;

use thiserror::Error;

use super::EmbeddingVector;
use crate::binfmt::{Reader, Writer};

const MAGIC: &[u8; 4] = b"LRVE";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum VectorFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt vector file: {0}")]
    Corrupt(String),
    #[error("vectors have mixed dims ({expected} and {got})")]
    DimMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    pub provider_tag: String,
    pub dim: usize,
    pub entries: Vec<(String, EmbeddingVector)>,
}

pub fn write_vectors(
    path: &Path,
    provider_tag: &str,
    entries: &[(String, EmbeddingVector)],
) -> Result<(), VectorFileError> {
    let dim = entries.first().map_or(0, |(_, v)| v.dim());
    if let Some((_, v)) = entries.iter().find(|(_, v)| v.dim() != dim) {
        return Err(VectorFileError::DimMismatch {
            expected: dim,
            got: v.dim(),
        });
    }
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u32(dim as u32);
    w.u32(entries.len() as u32);
    w.str(provider_tag);
    for (id, v) in entries {
        w.str(id);
        for &x in v.values() {
            w.f64(x);
        }
    }
    std::fs::write(path, w.buf)?;
    Ok(())
}

pub fn read_vectors(path: &Path) -> Result<VectorSet, VectorFileError> {
    let data = std::fs::read(path)?;
    let corrupt = |m: &str| VectorFileError::Corrupt(m.to_string());
    let mut r = Reader::new(&data);
    if r.bytes(4) != Some(MAGIC.as_slice()) {
        return Err(corrupt("bad magic"));
    }
    let version = r.u16().ok_or_else(|| corrupt("truncated header"))?;
    if version != VERSION {
        return Err(VectorFileError::Corrupt(format!("unsupported version {version}")));
    }
    let dim = r.u32().ok_or_else(|| corrupt("truncated header"))? as usize;
    let count = r.u32().ok_or_else(|| corrupt("truncated header"))? as usize;
    let tag = r.str().ok_or_else(|| corrupt("truncated header"))?.to_string();
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let id = r
            .str()
            .ok_or_else(|| VectorFileError::Corrupt(format!("entry {i} truncated")))?
            .to_string();
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            values.push(
                r.f64()
                    .ok_or_else(|| VectorFileError::Corrupt(format!("entry {i} truncated")))?,
            );
        }
        let v = EmbeddingVector::from_unit(values, tag.clone())
            .ok_or_else(|| VectorFileError::Corrupt(format!("entry {i} ({id}) is not unit-norm")))?;
        entries.push((id, v));
    }
    if r.remaining() != 0 {
        return Err(corrupt("trailing bytes"));
    }
    Ok(VectorSet {
        provider_tag: tag,
        dim,
        entries,
    })
}
