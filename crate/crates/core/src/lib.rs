//! Retrieval-augmented lookup of personalized lab test reference ranges.
//!
//! The crate is organized around the pipeline a question travels through:
//!
//! - [`ingest`]: encyclopedia HTML pages → [`ingest::LabDocument`] corpus files
//! - [`embedding`]: text → unit-norm [`embedding::EmbeddingVector`]s (remote API or local hashing)
//! - [`index`]: exact top-k cosine search over embedded documents, with an on-disk format
//! - [`chat`]: the per-session conversation engine (factor retrieval, follow-up
//!   questions, normal range retrieval) and its LLM providers
//! - [`eval`]: ground-truth datasets, factor P/R/F1 and question/lab level accuracy
//!
//! ```no_run
//! use std::sync::Arc;
//! use labrag_core::chat::{LabAssistant, OracleProvider};
//! use labrag_core::embedding::LocalHashEmbedder;
//! use labrag_core::eval::LabDataset;
//! use labrag_core::index::VectorIndex;
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let index = VectorIndex::load("index.lrix")?;
//! let dataset = LabDataset::load("fixtures/datasets/labs.jsonl")?;
//! let assistant = LabAssistant::builder(
//!     Arc::new(index),
//!     Arc::new(LocalHashEmbedder::default()),
//!     Arc::new(OracleProvider::from_dataset(&dataset)),
//! )
//! .build()?;
//! let session = assistant.ask("What is the normal range for Aldolase blood test?")?;
//! println!("{:?}", session.stage());
//! # Ok(())
//! # }
//! ```

pub mod chat;
pub mod clock;
pub mod embedding;
pub mod eval;
pub mod index;
pub mod ingest;

mod binfmt;
mod http;

pub use http::RetryPolicy;
