//! Per-conversation state. Stages only move forward:
//!
//! ```text
//! AwaitingQuery   -> AwaitingFactors | Answered | Failed
//! AwaitingFactors -> AwaitingFactors | Answered | Failed
//! ```

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::factors::{FactorQuestion, FactorSet};
use super::ChatError;
use crate::index::RetrievalHit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AwaitingQuery,
    AwaitingFactors,
    Answered,
    Failed,
}

impl Stage {
    pub fn can_transition_to(self, next: Stage) -> bool {
        use Stage::*;
        matches!(
            (self, next),
            (AwaitingQuery, AwaitingFactors | Answered | Failed)
                | (AwaitingFactors, AwaitingFactors | Answered | Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Answered | Stage::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::AwaitingQuery => "awaiting_query",
            Stage::AwaitingFactors => "awaiting_factors",
            Stage::Answered => "answered",
            Stage::Failed => "failed",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalRangeAnswer {
    pub text: String,
    pub source_url: String,
    /// Factor values the answer was retrieved for; empty for factorless labs.
    pub factors_applied: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionFailure {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    session_id: String,
    stage: Stage,
    lab_query: String,
    retrieved: Vec<RetrievalHit>,
    factors: Option<FactorSet>,
    pending_questions: Vec<FactorQuestion>,
    collected_answers: BTreeMap<String, String>,
    answer: Option<NormalRangeAnswer>,
    failure: Option<SessionFailure>,
    transcript: Vec<TranscriptEntry>,
    answer_submissions: u32,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
}

impl Session {
    pub(crate) fn new(session_id: String, lab_query: String, retrieved: Vec<RetrievalHit>, now: DateTime<Utc>) -> Self {
        let mut s = Self {
            session_id,
            stage: Stage::AwaitingQuery,
            lab_query: String::new(),
            retrieved,
            factors: None,
            pending_questions: Vec::new(),
            collected_answers: BTreeMap::new(),
            answer: None,
            failure: None,
            transcript: Vec::new(),
            answer_submissions: 0,
            created_at: now,
            updated_at: now,
        };
        s.push(Role::User, lab_query.clone(), now);
        s.lab_query = lab_query;
        s
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn lab_query(&self) -> &str {
        &self.lab_query
    }

    pub fn retrieved(&self) -> &[RetrievalHit] {
        &self.retrieved
    }

    /// `None` until factor retrieval has run.
    pub fn factors(&self) -> Option<&FactorSet> {
        self.factors.as_ref()
    }

    pub fn pending_questions(&self) -> &[FactorQuestion] {
        &self.pending_questions
    }

    pub fn collected_answers(&self) -> &BTreeMap<String, String> {
        &self.collected_answers
    }

    pub fn answer(&self) -> Option<&NormalRangeAnswer> {
        self.answer.as_ref()
    }

    pub fn failure(&self) -> Option<&SessionFailure> {
        self.failure.as_ref()
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Calls to `submit_answers` made while factors were pending, accepted or not.
    pub fn answer_submissions(&self) -> u32 {
        self.answer_submissions
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn updated_at(&self) -> DateTime<Utc> {
        self.updated_at
    }

    pub(crate) fn transition(&mut self, to: Stage) -> Result<(), ChatError> {
        if !self.stage.can_transition_to(to) {
            return Err(ChatError::IllegalTransition { from: self.stage, to });
        }
        self.stage = to;
        Ok(())
    }

    pub(crate) fn push(&mut self, role: Role, text: String, now: DateTime<Utc>) {
        self.transcript.push(TranscriptEntry {
            role,
            text,
            timestamp: now,
        });
        self.updated_at = now;
    }

    pub(crate) fn set_factors(&mut self, factors: FactorSet, questions: Vec<FactorQuestion>) {
        self.factors = Some(factors);
        self.pending_questions = questions;
    }

    pub(crate) fn count_submission(&mut self) {
        self.answer_submissions += 1;
    }

    pub(crate) fn store_answers(&mut self, answers: BTreeMap<String, String>) {
        self.collected_answers.extend(answers);
        self.pending_questions.clear();
    }

    pub(crate) fn finish(&mut self, answer: NormalRangeAnswer) -> Result<(), ChatError> {
        self.transition(Stage::Answered)?;
        self.answer = Some(answer);
        Ok(())
    }

    pub(crate) fn fail(&mut self, error: &ChatError) -> Result<(), ChatError> {
        self.transition(Stage::Failed)?;
        self.failure = Some(SessionFailure {
            code: error.code().to_string(),
            message: error.to_string(),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_table() {
        use Stage::*;
        let all = [AwaitingQuery, AwaitingFactors, Answered, Failed];
        let allowed: Vec<(Stage, Stage)> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_transition_to(*b))
            .collect();
        assert_eq!(
            allowed,
            vec![
                (AwaitingQuery, AwaitingFactors),
                (AwaitingQuery, Answered),
                (AwaitingQuery, Failed),
                (AwaitingFactors, AwaitingFactors),
                (AwaitingFactors, Answered),
                (AwaitingFactors, Failed),
            ]
        );
    }

    #[test]
    fn terminal_stages_reject_everything() {
        let mut s = Session::new("id".into(), "q".into(), vec![], Utc::now());
        s.fail(&ChatError::NoAnswer).unwrap();
        assert_eq!(s.failure().unwrap().code, "no_answer");
        assert!(matches!(
            s.transition(Stage::Answered),
            Err(ChatError::IllegalTransition { .. })
        ));
        assert!(s.fail(&ChatError::NoAnswer).is_err());
    }

    #[test]
    fn stage_serializes_snake_case() {
        assert_eq!(
            serde_json::to_string(&Stage::AwaitingFactors).unwrap(),
            "\"awaiting_factors\""
        );
    }
}
