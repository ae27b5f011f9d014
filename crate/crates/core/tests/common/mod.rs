#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use labrag_core::chat::{LabAssistant, LlmProvider, OracleProvider};
use labrag_core::clock::ManualClock;
use labrag_core::embedding::{embed_corpus, Embedder, LocalHashEmbedder, VectorSet};
use labrag_core::eval::LabDataset;
use labrag_core::index::VectorIndex;
use labrag_core::ingest::{read_corpus, Corpus};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn corpus() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| read_corpus(&fixtures().join("golden/corpus.jsonl")).expect("golden corpus"))
}

pub fn dataset() -> &'static LabDataset {
    static D: OnceLock<LabDataset> = OnceLock::new();
    D.get_or_init(|| LabDataset::load(fixtures().join("datasets/labs.jsonl")).expect("fixture dataset"))
}

pub fn index() -> Arc<VectorIndex> {
    static I: OnceLock<Arc<VectorIndex>> = OnceLock::new();
    I.get_or_init(|| {
        let embedder = LocalHashEmbedder::default();
        let vectors = embed_corpus(corpus(), &embedder).expect("embed fixture corpus");
        let set = VectorSet {
            provider_tag: embedder.provider_tag(),
            dim: embedder.dim(),
            entries: vectors,
        };
        Arc::new(VectorIndex::from_corpus(corpus(), set).expect("fixture index"))
    })
    .clone()
}

pub fn oracle() -> Arc<dyn LlmProvider> {
    Arc::new(OracleProvider::from_dataset(dataset()))
}

pub fn assistant_with(llm: Arc<dyn LlmProvider>) -> LabAssistant {
    LabAssistant::builder(index(), Arc::new(LocalHashEmbedder::default()), llm)
        .clock(Arc::new(ManualClock::at_unix(1_700_000_000)))
        .build()
        .expect("assistant")
}

pub fn assistant() -> LabAssistant {
    assistant_with(oracle())
}
