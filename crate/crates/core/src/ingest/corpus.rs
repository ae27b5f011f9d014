//! JSON Lines corpus file: one header line, then one document per line,
//! sorted by `doc_id`.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::LabDocument;

const FORMAT: &str = "labrag-corpus";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    source_tag: String,
}

/// A validated, deduplicated set of documents in `doc_id` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    source_tag: String,
    docs: Vec<LabDocument>,
}

impl Corpus {
    /// Sorts by `doc_id`. Two documents with the same id are a schema error
    /// (reported at line 0, since they did not come from a file).
    pub fn new(source_tag: &str, mut docs: Vec<LabDocument>) -> Result<Self, CorpusError> {
        docs.sort_by(|a, b| a.doc_id().cmp(b.doc_id()));
        if let Some(w) = docs.windows(2).find(|w| w[0].doc_id() == w[1].doc_id()) {
            return Err(CorpusError::Schema {
                line: 0,
                message: format!(
                    "duplicate doc_id {} ({:?} and {:?})",
                    w[0].doc_id(),
                    w[0].lab_name(),
                    w[1].lab_name()
                ),
            });
        }
        Ok(Self {
            source_tag: source_tag.to_string(),
            docs,
        })
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn docs(&self) -> &[LabDocument] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&LabDocument> {
        self.docs
            .binary_search_by(|d| d.doc_id().cmp(doc_id))
            .ok()
            .map(|i| &self.docs[i])
    }

    pub fn into_docs(self) -> Vec<LabDocument> {
        self.docs
    }
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write_lines(corpus, &mut out)?;
    out.flush()?;
    Ok(())
}

fn write_lines(corpus: &Corpus, out: &mut impl Write) -> Result<(), CorpusError> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        source_tag: corpus.source_tag.clone(),
    };
    serde_json::to_writer(&mut *out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for doc in &corpus.docs {
        serde_json::to_writer(&mut *out, doc).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_lines(BufReader::new(file))
}

fn read_lines(reader: impl BufRead) -> Result<Corpus, CorpusError> {
    let schema = |line: usize, message: String| CorpusError::Schema { line, message };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let header: Header = loop {
        match lines.next() {
            None => return Err(schema(1, "missing header line".into())),
            Some((n, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| schema(n, format!("bad header: {e}")))?;
            }
        }
    };
    if header.format != FORMAT {
        return Err(schema(1, format!("unexpected format {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(schema(1, format!("unsupported version {}", header.version)));
    }

    let mut docs = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: LabDocument = serde_json::from_str(&line).map_err(|e| schema(n, e.to_string()))?;
        if !seen.insert(doc.doc_id().to_string()) {
            return Err(schema(n, format!("duplicate doc_id {}", doc.doc_id())));
        }
        docs.push(doc);
    }
    Corpus::new(&header.source_tag, docs)
}
