//! The conversation engine: retrieve context for a question, ask the model
//! which patient factors matter, collect the patient's answers, then ask the
//! model for the matching normal range.

mod engine;
mod factors;
mod prompts;
mod providers;
mod session;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use engine::{ContextStrategy, LabAssistant, LabAssistantBuilder};
pub use factors::{
    make_factor_questions, mine_age_choices, parse_factor_response, FactorQuestion, FactorSet, FactorVocabulary,
};
pub use prompts::{parse_rendered_factors, render, render_context, render_factors, PromptSet};
pub use providers::{
    LlmKind, LlmProviderConfig, OracleProvider, RemoteChatProvider, ReplayProvider, TranscriptRecord,
    DEFAULT_CHAT_ENDPOINT, DEFAULT_CHAT_KEY_ENV, DEFAULT_CHAT_MODEL,
};
pub use session::{NormalRangeAnswer, Role, Session, SessionFailure, Stage, TranscriptEntry};

/// Shown with every final answer.
pub const DISCLAIMER: &str =
    "This information is for general reference only and is not medical advice. Reference ranges differ between laboratories; ask your health care provider what your results mean.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    FactorRetrieval,
    RangeRetrieval,
}

/// One model call. Temperature is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub kind: PromptKind,
    pub system: String,
    pub user: String,
    pub model: String,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(kind: PromptKind, system: String, user: String, model: &str) -> Self {
        Self {
            kind,
            system,
            user,
            model: model.to_string(),
            temperature: 0.0,
        }
    }

    /// Key used by recorded transcripts: SHA-256 of `system + "\n\n" + user`, hex.
    pub fn prompt_sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        h.update(b"\n\n");
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("no ground truth for a lab named in: {0:?}")]
    UnknownLab(String),
    #[error("no ground-truth answer for {lab} with factors {factors}")]
    NoGroundTruth { lab: String, factors: String },
    #[error("no recorded response for prompt {prompt_sha256}")]
    MissingRecording { prompt_sha256: String },
    #[error("api key missing or rejected: {0}")]
    Auth(String),
    #[error("chat request failed after {attempts} attempt(s): {message}")]
    Remote {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("transcript error: {0}")]
    Transcript(String),
    #[error("invalid provider config: {0}")]
    Config(String),
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;

    /// "oracle", "replay" or "remote-chat".
    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChatError {
    #[error("question is empty")]
    EmptyQuery,
    #[error("retrieval failed: {0}")]
    Retrieval(String),
    #[error("model provider failed: {0}")]
    Provider(LlmError),
    #[error("could not read a factor list from the model response {response:?}: {reason}")]
    UnparseableResponse { response: String, reason: String },
    #[error("the lab test in {query:?} is not in the reference corpus")]
    NotInCorpus { query: String },
    #[error("the reference material has no normal range for this question")]
    NoAnswer,
    #[error("missing answers for: {}", .0.join(", "))]
    MissingFactor(Vec<String>),
    #[error("{value:?} is not a valid answer for {factor} (choices: {})", .choices.join(", "))]
    InvalidChoice {
        factor: String,
        value: String,
        choices: Vec<String>,
    },
    #[error("{0:?} was not asked about in this session")]
    UnknownFactor(String),
    #[error("operation not allowed while the session is {actual}")]
    WrongStage { actual: Stage },
    #[error("illegal stage transition {from} -> {to}")]
    IllegalTransition { from: Stage, to: Stage },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl ChatError {
    /// Stable snake_case identifier, used in API error bodies and session failures.
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyQuery => "empty_query",
            Self::Retrieval(_) => "retrieval_failed",
            Self::Provider(_) => "provider_error",
            Self::UnparseableResponse { .. } => "unparseable_response",
            Self::NotInCorpus { .. } => "not_in_corpus",
            Self::NoAnswer => "no_answer",
            Self::MissingFactor(_) => "missing_factor",
            Self::InvalidChoice { .. } => "invalid_choice",
            Self::UnknownFactor(_) => "unknown_factor",
            Self::WrongStage { .. } => "wrong_stage",
            Self::IllegalTransition { .. } => "illegal_transition",
            Self::Config(_) => "config_error",
        }
    }
}
