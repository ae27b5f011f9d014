//! Drive a [`LabAssistant`] over a dataset and score what comes back.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    accuracy, base_question, match_answer, micro_prf, score_factors, ConfusionCounts, LabDataset, LabFactorRow,
    MatchMode, QuestionOutcome, RangeQuestion, ReferenceSet,
};
use crate::chat::{ChatError, FactorSet, LabAssistant, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalScope {
    pub factors: bool,
    pub ranges: bool,
}

impl EvalScope {
    pub const BOTH: Self = Self {
        factors: true,
        ranges: true,
    };
    pub const FACTORS: Self = Self {
        factors: true,
        ranges: false,
    };
    pub const RANGES: Self = Self {
        factors: false,
        ranges: true,
    };
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub mode: MatchMode,
    pub references: ReferenceSet,
    /// Worker threads; `None` uses rayon's global pool.
    pub threads: Option<usize>,
}

/// A lab (or one of its questions) that could not be evaluated because of
/// an infrastructure error. Such items are left out of the metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabFailure {
    pub lab_name: String,
    pub question_text: Option<String>,
    pub phase: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub labs_scored: usize,
    pub per_lab: Vec<LabFactorRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub lab_name: String,
    pub question_text: String,
    pub factor_values: BTreeMap<String, String>,
    pub true_answer: String,
    pub predicted: Option<String>,
    pub source_url: Option<String>,
    pub correct: bool,
    pub stage: Stage,
    pub submissions: u32,
    pub failure: Option<String>,
    pub retrieved: Vec<String>,
    /// Whether the lab's own document was among the retrieved hits.
    pub context_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRangeRow {
    pub lab_name: String,
    pub questions: usize,
    pub correct: usize,
    pub credit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeMetrics {
    pub mode: MatchMode,
    pub qla: f64,
    pub lla: f64,
    pub correct_questions: usize,
    pub total_questions: usize,
    pub lab_credit: f64,
    pub total_labs: usize,
    /// Fraction of scored questions whose lab document was retrieved.
    pub context_recall: f64,
    pub per_lab: Vec<LabRangeRow>,
    pub questions: Vec<QuestionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub provider_kind: String,
    pub provider_tag: String,
    pub timestamp: DateTime<Utc>,
    /// False when some labs or questions were skipped after errors.
    pub complete: bool,
    pub factors: Option<FactorMetrics>,
    pub ranges: Option<RangeMetrics>,
    pub failures: Vec<LabFailure>,
}

pub fn run_eval(
    assistant: &LabAssistant,
    dataset: &LabDataset,
    scope: EvalScope,
    options: &EvalOptions,
    timestamp: DateTime<Utc>,
) -> MetricReport {
    let work = || {
        let mut failures = Vec::new();
        let factors = scope.factors.then(|| factor_phase(assistant, dataset, &mut failures));
        let ranges = scope
            .ranges
            .then(|| range_phase(assistant, dataset, options, &mut failures));
        MetricReport {
            provider_kind: assistant.provider_kind().to_string(),
            provider_tag: assistant.index().provider_tag().to_string(),
            timestamp,
            complete: failures.is_empty(),
            factors,
            ranges,
            failures,
        }
    };
    match options.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(work),
            Err(e) => {
                tracing::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                work()
            }
        },
        None => work(),
    }
}

fn factor_phase(assistant: &LabAssistant, dataset: &LabDataset, failures: &mut Vec<LabFailure>) -> FactorMetrics {
    let truth = dataset.factor_entries();
    let results: Vec<(String, Result<FactorSet, ChatError>)> = truth
        .par_iter()
        .map(|entry| {
            let r = assistant
                .start_session(&base_question(&entry.lab_name))
                .and_then(|mut s| match assistant.retrieve_factors(&mut s) {
                    // A reply that is not a factor list counts as predicting nothing.
                    Err(ChatError::UnparseableResponse { .. }) => Ok(FactorSet::empty()),
                    other => other,
                });
            (entry.lab_name.clone(), r)
        })
        .collect();

    let mut predictions = BTreeMap::new();
    for (lab, r) in results {
        match r {
            Ok(set) => {
                predictions.insert(lab, set);
            }
            Err(e) => failures.push(LabFailure {
                lab_name: lab,
                question_text: None,
                phase: "factors".into(),
                error: e.to_string(),
            }),
        }
    }
    let scored: Vec<_> = truth
        .into_iter()
        .filter(|e| predictions.contains_key(&e.lab_name))
        .collect();
    let (counts, per_lab) = score_factors(&predictions, &scored).expect("predictions cover the scored labs");
    let prf = micro_prf(&counts);
    FactorMetrics {
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        counts,
        labs_scored: per_lab.len(),
        per_lab,
    }
}

fn range_phase(
    assistant: &LabAssistant,
    dataset: &LabDataset,
    options: &EvalOptions,
    failures: &mut Vec<LabFailure>,
) -> RangeMetrics {
    let questions = dataset.range_questions();
    let results: Vec<Result<QuestionRow, ChatError>> = questions
        .par_iter()
        .map(|q| run_question(assistant, q, options))
        .collect();

    let mut rows = Vec::new();
    for (q, r) in questions.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(LabFailure {
                lab_name: q.lab_name.clone(),
                question_text: Some(q.question_text.clone()),
                phase: "ranges".into(),
                error: e.to_string(),
            }),
        }
    }
    let outcomes: Vec<QuestionOutcome> = rows
        .iter()
        .map(|r| QuestionOutcome {
            lab_name: r.lab_name.clone(),
            question_text: r.question_text.clone(),
            correct: r.correct,
        })
        .collect();
    let acc = accuracy(&outcomes).expect("dataset questions are unique");

    let mut per_lab: Vec<LabRangeRow> = Vec::new();
    for r in &rows {
        match per_lab.last_mut() {
            Some(last) if last.lab_name == r.lab_name => {
                last.questions += 1;
                last.correct += usize::from(r.correct);
            }
            _ => per_lab.push(LabRangeRow {
                lab_name: r.lab_name.clone(),
                questions: 1,
                correct: usize::from(r.correct),
                credit: 0.0,
            }),
        }
    }
    for lab in &mut per_lab {
        lab.credit = lab.correct as f64 / lab.questions as f64;
    }
    let hits = rows.iter().filter(|r| r.context_hit).count();
    RangeMetrics {
        mode: options.mode,
        qla: acc.qla,
        lla: acc.lla,
        correct_questions: acc.correct_questions,
        total_questions: acc.total_questions,
        lab_credit: acc.lab_credit,
        total_labs: acc.total_labs,
        context_recall: if rows.is_empty() {
            0.0
        } else {
            hits as f64 / rows.len() as f64
        },
        per_lab,
        questions: rows,
    }
}

/// One fresh session per question: base question, factor retrieval, then
/// the question's factor values as the patient's answers. Errors that end
/// the session (no answer, unparseable reply, bad answers) make the row
/// incorrect; provider and retrieval errors are returned.
fn run_question(assistant: &LabAssistant, q: &RangeQuestion, options: &EvalOptions) -> Result<QuestionRow, ChatError> {
    let mut session = assistant.start_session(&base_question(&q.lab_name))?;
    let outcome = match assistant.retrieve_factors(&mut session) {
        Ok(f) if f.is_empty() => assistant.retrieve_normal_range(&mut session),
        Ok(_) => assistant.submit_answers(&mut session, &q.factor_values),
        Err(e) => Err(e),
    };
    let (predicted, source_url, failure) = match outcome {
        Ok(a) => (Some(a.text), Some(a.source_url), None),
        Err(e @ (ChatError::Provider(_) | ChatError::Retrieval(_))) => return Err(e),
        Err(e) => (None, None, Some(format!("{}: {e}", e.code()))),
    };
    let correct = predicted.as_deref().is_some_and(|p| {
        match_answer(
            p,
            &q.true_answer,
            options.references.get(&q.question_text),
            options.mode,
        )
    });
    Ok(QuestionRow {
        lab_name: q.lab_name.clone(),
        question_text: q.question_text.clone(),
        factor_values: q.factor_values.clone(),
        true_answer: q.true_answer.clone(),
        predicted,
        source_url,
        correct,
        stage: session.stage(),
        submissions: session.answer_submissions(),
        failure,
        retrieved: session.retrieved().iter().map(|h| h.doc_id.clone()).collect(),
        context_hit: session.retrieved().iter().any(|h| h.url == q.url),
    })
}
