//! Corpus ingestion: crawl encyclopedia pages, pull out their "Normal Results"
//! section, and persist the result as a JSON Lines corpus.

mod corpus;
mod crawl;
mod html;

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use corpus::{read_corpus, write_corpus, Corpus, CorpusError};
pub use crawl::{article_links, crawl, CrawlConfig, CrawlError, CrawlFailure, CrawlReport};
pub use html::{parse_page, ParseError};

/// A fetched page body together with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    pub url: String,
    pub html: String,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("lab name is empty")]
    EmptyLabName,
    #[error("normal results text is empty")]
    EmptyNormalResults,
    #[error("invalid url {0:?}")]
    InvalidUrl(String),
}

impl RawPage {
    pub fn new(
        url: impl Into<String>,
        html: impl Into<String>,
        fetched_at: DateTime<Utc>,
    ) -> Result<Self, DocumentError> {
        let url = url.into();
        url::Url::parse(&url).map_err(|_| DocumentError::InvalidUrl(url.clone()))?;
        Ok(Self {
            url,
            html: html.into(),
            fetched_at,
        })
    }
}

/// One lab test: the retrieval unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DocumentRecord", into = "DocumentRecord")]
pub struct LabDocument {
    doc_id: String,
    lab_name: String,
    normal_results: String,
    url: String,
}

/// Wire shape of a corpus line. Field order is the on-disk order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    doc_id: String,
    lab_name: String,
    normal_results: String,
    url: String,
}

impl TryFrom<DocumentRecord> for LabDocument {
    type Error = String;

    fn try_from(r: DocumentRecord) -> Result<Self, String> {
        let doc = LabDocument::new(&r.lab_name, &r.normal_results, &r.url).map_err(|e| e.to_string())?;
        if doc.lab_name != r.lab_name || doc.normal_results != r.normal_results {
            return Err(format!("document {:?} is not in normalized form", r.lab_name));
        }
        if doc.doc_id != r.doc_id {
            return Err(format!(
                "doc_id {} does not match lab name {:?} (expected {})",
                r.doc_id, r.lab_name, doc.doc_id
            ));
        }
        Ok(doc)
    }
}

impl From<LabDocument> for DocumentRecord {
    fn from(d: LabDocument) -> Self {
        Self {
            doc_id: d.doc_id,
            lab_name: d.lab_name,
            normal_results: d.normal_results,
            url: d.url,
        }
    }
}

impl LabDocument {
    /// Trims the name, collapses whitespace in the section text and derives the id.
    pub fn new(lab_name: &str, normal_results: &str, url: &str) -> Result<Self, DocumentError> {
        let lab_name = collapse_whitespace(lab_name);
        if lab_name.is_empty() {
            return Err(DocumentError::EmptyLabName);
        }
        let normal_results = collapse_whitespace(normal_results);
        if normal_results.is_empty() {
            return Err(DocumentError::EmptyNormalResults);
        }
        url::Url::parse(url).map_err(|_| DocumentError::InvalidUrl(url.to_string()))?;
        Ok(Self {
            doc_id: doc_id_for(&lab_name),
            lab_name,
            normal_results,
            url: url.to_string(),
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn lab_name(&self) -> &str {
        &self.lab_name
    }

    pub fn normal_results(&self) -> &str {
        &self.normal_results
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// First 16 hex chars of SHA-256 over the lowercased lab name.
pub fn doc_id_for(lab_name: &str) -> String {
    let digest = Sha256::digest(lab_name.trim().to_lowercase().as_bytes());
    hex::encode(digest)[..16].to_string()
}

/// The text that gets embedded: `"<lab name>: <normal results>"`.
pub fn format_document(doc: &LabDocument) -> String {
    format!("{}: {}", doc.lab_name, doc.normal_results)
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse every `*.html` file under `dir` (sorted by file name) into a corpus.
/// Pages without a usable "Normal Results" section are skipped and logged.
pub fn ingest_fixture_dir(dir: &Path, source_tag: &str) -> Result<(Corpus, Vec<(String, ParseError)>), CorpusError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "html" || x == "htm"))
        .collect();
    paths.sort();

    let mut docs = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let html = std::fs::read_to_string(&path)?;
        let url = html::canonical_url(&html).unwrap_or_else(|| file_url(&path));
        let fetched_at = std::fs::metadata(&path)
            .and_then(|m| m.modified())
            .map(DateTime::<Utc>::from)
            .unwrap_or_else(|_| Utc::now());
        let page = RawPage { url, html, fetched_at };
        match parse_page(&page) {
            Ok(doc) => docs.push(doc),
            Err(e) => {
                tracing::info!(path = %path.display(), "skipping page: {e}");
                skipped.push((path.display().to_string(), e));
            }
        }
    }
    Ok((Corpus::new(source_tag, docs)?, skipped))
}

fn file_url(path: &Path) -> String {
    let abs = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    url::Url::from_file_path(&abs)
        .map(|u| u.to_string())
        .unwrap_or_else(|_| format!("file://{}", abs.display()))
}
