//! [`LabAssistant`]: drives sessions through retrieval and the two model calls.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::factors::{make_factor_questions, parse_factor_response, FactorQuestion, FactorSet, FactorVocabulary};
use super::prompts::{render, render_context, render_factors, PromptSet};
use super::session::{NormalRangeAnswer, Role, Session, Stage};
use super::{ChatError, ChatRequest, LlmError, LlmProvider, PromptKind, DEFAULT_CHAT_MODEL};
use crate::clock::{Clock, SystemClock};
use crate::embedding::Embedder;
use crate::eval::normalize_answer;
use crate::index::{RetrievalHit, VectorIndex, DEFAULT_TOP_K};

/// How retrieved documents are given to the model for range retrieval.
/// Factor retrieval always sees all retrieved documents at once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ContextStrategy {
    /// All retrieved documents in one prompt.
    #[default]
    SingleContext,
    /// One prompt per retrieved document in rank order; the first one that
    /// yields an answer wins and is the source.
    PerDocument,
}

pub struct LabAssistant {
    index: Arc<VectorIndex>,
    embedder: Arc<dyn Embedder>,
    llm: Arc<dyn LlmProvider>,
    prompts: PromptSet,
    vocab: Arc<FactorVocabulary>,
    clock: Arc<dyn Clock>,
    model_name: String,
    top_k: usize,
    strategy: ContextStrategy,
}

pub struct LabAssistantBuilder {
    index: Arc<VectorIndex>,
    embedder: Arc<dyn Embedder>,
    llm: Arc<dyn LlmProvider>,
    prompts: PromptSet,
    vocab: Arc<FactorVocabulary>,
    clock: Arc<dyn Clock>,
    model_name: String,
    top_k: usize,
    strategy: ContextStrategy,
}

impl LabAssistantBuilder {
    pub fn prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn vocabulary(mut self, vocab: Arc<FactorVocabulary>) -> Self {
        self.vocab = vocab;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn model_name(mut self, model: impl Into<String>) -> Self {
        self.model_name = model.into();
        self
    }

    pub fn top_k(mut self, k: usize) -> Self {
        self.top_k = k;
        self
    }

    pub fn strategy(mut self, strategy: ContextStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn build(self) -> Result<LabAssistant, ChatError> {
        if self.top_k == 0 {
            return Err(ChatError::Config("top_k must be at least 1".into()));
        }
        if self.embedder.dim() != self.index.dim() {
            return Err(ChatError::Config(format!(
                "embedder produces {}-dim vectors but the index holds {}-dim vectors",
                self.embedder.dim(),
                self.index.dim()
            )));
        }
        if self.embedder.provider_tag() != self.index.provider_tag() {
            tracing::warn!(
                embedder = %self.embedder.provider_tag(),
                index = %self.index.provider_tag(),
                "query embedder differs from the one that built the index"
            );
        }
        Ok(LabAssistant {
            index: self.index,
            embedder: self.embedder,
            llm: self.llm,
            prompts: self.prompts,
            vocab: self.vocab,
            clock: self.clock,
            model_name: self.model_name,
            top_k: self.top_k,
            strategy: self.strategy,
        })
    }
}

impl LabAssistant {
    pub fn builder(
        index: Arc<VectorIndex>,
        embedder: Arc<dyn Embedder>,
        llm: Arc<dyn LlmProvider>,
    ) -> LabAssistantBuilder {
        LabAssistantBuilder {
            index,
            embedder,
            llm,
            prompts: PromptSet::default(),
            vocab: FactorVocabulary::builtin(),
            clock: Arc::new(SystemClock),
            model_name: DEFAULT_CHAT_MODEL.into(),
            top_k: DEFAULT_TOP_K,
            strategy: ContextStrategy::default(),
        }
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn vocabulary(&self) -> &FactorVocabulary {
        &self.vocab
    }

    pub fn provider_kind(&self) -> &'static str {
        self.llm.kind()
    }

    pub fn new_session_id() -> String {
        format!("{:032x}", rand::random::<u128>())
    }

    /// Embed the question and retrieve the top-k documents.
    pub fn start_session(&self, question: &str) -> Result<Session, ChatError> {
        self.start_session_with_id(Self::new_session_id(), question)
    }

    pub fn start_session_with_id(&self, session_id: String, question: &str) -> Result<Session, ChatError> {
        let question = question.split_whitespace().collect::<Vec<_>>().join(" ");
        if question.is_empty() {
            return Err(ChatError::EmptyQuery);
        }
        let retrieved = self.retrieve(&question)?;
        Ok(Session::new(session_id, question, retrieved, self.clock.now()))
    }

    pub fn retrieve(&self, question: &str) -> Result<Vec<RetrievalHit>, ChatError> {
        let query = self
            .embedder
            .embed(question)
            .map_err(|e| ChatError::Retrieval(e.to_string()))?;
        self.index
            .search(&query, self.top_k)
            .map_err(|e| ChatError::Retrieval(e.to_string()))
    }

    /// Ask the model which factors condition the range. A non-empty answer
    /// moves the session to `AwaitingFactors` with one question per factor;
    /// an empty one leaves it ready for [`Self::retrieve_normal_range`].
    pub fn retrieve_factors(&self, session: &mut Session) -> Result<FactorSet, ChatError> {
        if session.stage() != Stage::AwaitingQuery || session.factors().is_some() {
            return Err(ChatError::WrongStage {
                actual: session.stage(),
            });
        }
        let context = render_context(session.retrieved());
        let request = ChatRequest::new(
            PromptKind::FactorRetrieval,
            render(&self.prompts.factor_system, &[("context", &context)]),
            render(&self.prompts.factor_user, &[("lab", session.lab_query())]),
            &self.model_name,
        );
        let response = match self.llm.complete(&request) {
            Ok(r) => r,
            Err(e) => return Err(self.provider_failure(session, e)),
        };
        let factors = match parse_factor_response(&response, &self.vocab) {
            Ok(f) => f,
            Err(reason) => {
                let err = ChatError::UnparseableResponse { response, reason };
                self.fail(session, &err);
                return Err(err);
            }
        };
        if factors.is_empty() {
            session.set_factors(factors.clone(), Vec::new());
            return Ok(factors);
        }
        let primary = primary_hit(session.retrieved(), session.lab_query());
        let document = primary.map(|h| h.text.as_str()).unwrap_or_default();
        let questions = make_factor_questions(&factors, document, &self.vocab);
        session.transition(Stage::AwaitingFactors)?;
        let now = self.clock.now();
        session.push(Role::Assistant, render_questions(&questions), now);
        session.set_factors(factors.clone(), questions);
        Ok(factors)
    }

    /// Validate and store the patient's answers, then retrieve the range.
    /// Validation failures leave the session unchanged apart from the
    /// submission count.
    pub fn submit_answers(
        &self,
        session: &mut Session,
        answers: &BTreeMap<String, String>,
    ) -> Result<NormalRangeAnswer, ChatError> {
        if session.stage() != Stage::AwaitingFactors {
            return Err(ChatError::WrongStage {
                actual: session.stage(),
            });
        }
        session.count_submission();
        let pending = session.pending_questions().to_vec();
        if pending.is_empty() {
            // Answers were stored by an earlier call whose range lookup failed.
            return self.retrieve_normal_range(session);
        }
        let accepted = validate_answers(&pending, answers, &self.vocab)?;
        let now = self.clock.now();
        let rendered = render_factors(
            pending
                .iter()
                .map(|q| (q.factor.as_str(), accepted[&q.factor].as_str())),
        );
        session.push(Role::User, rendered, now);
        session.store_answers(accepted);
        self.retrieve_normal_range(session)
    }

    /// Ask the model for the range given the collected factor values.
    pub fn retrieve_normal_range(&self, session: &mut Session) -> Result<NormalRangeAnswer, ChatError> {
        let Some(factors) = session.factors().cloned() else {
            return Err(ChatError::WrongStage {
                actual: session.stage(),
            });
        };
        match session.stage() {
            Stage::AwaitingQuery if factors.is_empty() => {}
            Stage::AwaitingFactors => {
                let missing: Vec<String> = factors
                    .names()
                    .iter()
                    .filter(|f| !session.collected_answers().contains_key(*f))
                    .cloned()
                    .collect();
                if !missing.is_empty() {
                    return Err(ChatError::MissingFactor(missing));
                }
            }
            actual => return Err(ChatError::WrongStage { actual }),
        }

        let applied: Vec<(String, String)> = factors
            .names()
            .iter()
            .map(|f| (f.clone(), session.collected_answers()[f].clone()))
            .collect();
        let factors_text = render_factors(applied.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        let user = render(
            &self.prompts.range_user,
            &[("lab", session.lab_query()), ("factors", &factors_text)],
        );

        let hits = session.retrieved().to_vec();
        let contexts: Vec<(String, Option<&RetrievalHit>)> = match self.strategy {
            ContextStrategy::SingleContext => vec![(render_context(&hits), None)],
            ContextStrategy::PerDocument => hits
                .iter()
                .map(|h| (render_context(std::slice::from_ref(h)), Some(h)))
                .collect(),
        };

        let mut found = None;
        for (context, hit) in contexts {
            let request = ChatRequest::new(
                PromptKind::RangeRetrieval,
                render(&self.prompts.range_system, &[("context", &context)]),
                user.clone(),
                &self.model_name,
            );
            let response = match self.llm.complete(&request) {
                Ok(r) => r,
                Err(e) => return Err(self.provider_failure(session, e)),
            };
            let text = response.trim();
            if !is_no_answer(text) {
                found = Some((text.to_string(), hit.cloned()));
                break;
            }
        }

        let Some((text, hit)) = found else {
            self.fail(session, &ChatError::NoAnswer);
            return Err(ChatError::NoAnswer);
        };
        let source_url = match hit {
            Some(h) => h.url,
            None => supporting_url(&hits, session.lab_query(), &text),
        };
        let answer = NormalRangeAnswer {
            text,
            source_url,
            factors_applied: applied.into_iter().collect(),
        };
        let now = self.clock.now();
        session.push(
            Role::Assistant,
            format!("{}\nSource: {}", answer.text, answer.source_url),
            now,
        );
        session.finish(answer.clone())?;
        Ok(answer)
    }

    /// Start a session and run it as far as it goes without patient input.
    ///
    /// Returns the session in `AwaitingFactors`, `Answered` or `Failed`.
    /// Only errors that leave no usable session (empty question, retrieval
    /// or provider failure) are returned as `Err`.
    pub fn ask(&self, question: &str) -> Result<Session, ChatError> {
        let mut session = self.start_session(question)?;
        self.advance(&mut session)?;
        Ok(session)
    }

    /// Run factor retrieval and, for factorless labs, range retrieval.
    /// Errors that already moved the session to `Failed` are absorbed.
    pub fn advance(&self, session: &mut Session) -> Result<(), ChatError> {
        let absorb = |r: Result<(), ChatError>, s: &Session| match r {
            Err(_) if s.stage() == Stage::Failed => Ok(()),
            other => other,
        };
        let factors = self.retrieve_factors(session).map(|f| f.is_empty());
        match factors {
            Ok(true) => {
                let r = self.retrieve_normal_range(session).map(|_| ());
                absorb(r, session)
            }
            Ok(false) => Ok(()),
            Err(e) => absorb(Err(e), session),
        }
    }

    fn provider_failure(&self, session: &mut Session, e: LlmError) -> ChatError {
        match e {
            LlmError::UnknownLab(_) => {
                let err = ChatError::NotInCorpus {
                    query: session.lab_query().to_string(),
                };
                self.fail(session, &err);
                err
            }
            other => ChatError::Provider(other),
        }
    }

    fn fail(&self, session: &mut Session, err: &ChatError) {
        let now = self.clock.now();
        let text = match err {
            ChatError::NoAnswer => {
                "I could not find a normal range for this question in the reference material.".to_string()
            }
            ChatError::NotInCorpus { .. } => "This lab test is not in the reference material.".to_string(),
            other => format!("Sorry, something went wrong: {other}"),
        };
        if session.fail(err).is_ok() {
            session.push(Role::Assistant, text, now);
        }
    }
}

fn validate_answers(
    pending: &[FactorQuestion],
    answers: &BTreeMap<String, String>,
    vocab: &FactorVocabulary,
) -> Result<BTreeMap<String, String>, ChatError> {
    let mut by_factor: BTreeMap<String, &str> = BTreeMap::new();
    for (raw, value) in answers {
        let name = vocab.canonicalize(raw).unwrap_or_else(|| raw.clone());
        if !pending.iter().any(|q| q.factor == name) {
            return Err(ChatError::UnknownFactor(raw.clone()));
        }
        by_factor.insert(name, value.as_str());
    }
    let missing: Vec<String> = pending
        .iter()
        .filter(|q| !by_factor.contains_key(&q.factor))
        .map(|q| q.factor.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ChatError::MissingFactor(missing));
    }
    let mut accepted = BTreeMap::new();
    for q in pending {
        let value = by_factor[&q.factor];
        let stored = q.accept(value).ok_or_else(|| ChatError::InvalidChoice {
            factor: q.factor.clone(),
            value: value.to_string(),
            choices: q.choices.clone(),
        })?;
        accepted.insert(q.factor.clone(), stored);
    }
    Ok(accepted)
}

fn is_no_answer(text: &str) -> bool {
    let t = text.trim().trim_end_matches('.').trim();
    t.is_empty() || t.eq_ignore_ascii_case("n/a") || t.eq_ignore_ascii_case("na")
}

/// The retrieved hit the question is about: the best-ranked one whose lab
/// name appears in the question, else rank 1.
pub(crate) fn primary_hit<'a>(hits: &'a [RetrievalHit], question: &str) -> Option<&'a RetrievalHit> {
    let q = question.to_lowercase();
    hits.iter()
        .find(|h| q.contains(&h.lab_name().to_lowercase()))
        .or_else(|| hits.first())
}

/// URL of the best-ranked hit whose text contains the answer, else of the
/// primary hit.
fn supporting_url(hits: &[RetrievalHit], question: &str, answer: &str) -> String {
    let needle = normalize_answer(answer);
    hits.iter()
        .find(|h| !needle.is_empty() && normalize_answer(&h.text).contains(&needle))
        .or_else(|| primary_hit(hits, question))
        .map(|h| h.url.clone())
        .unwrap_or_default()
}

fn render_questions(questions: &[FactorQuestion]) -> String {
    let mut out = String::from("To find the normal range that applies to you, please answer:");
    for (i, q) in questions.iter().enumerate() {
        out.push_str(&format!("\n{}. {}: ", i + 1, q.factor));
        let letters = ('A'..='Z').cycle();
        let listed: Vec<String> = q
            .choices
            .iter()
            .zip(letters)
            .map(|(c, l)| format!("{l}. {c}"))
            .collect();
        out.push_str(&listed.join(", "));
        if q.allows_free_text {
            if listed.is_empty() {
                out.push_str("(please type your answer)");
            } else {
                out.push_str(", or type your own");
            }
        }
    }
    out
}
