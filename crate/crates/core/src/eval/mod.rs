//! Ground-truth datasets, answer matching, the factor and range metrics, and
//! an end-to-end runner that drives a [`crate::chat::LabAssistant`].

mod dataset;
mod matcher;
mod metrics;
mod runner;

use thiserror::Error;

pub use dataset::{
    base_question, expand_questions, question_text, value_domains, DatasetError, FactorDatasetEntry, LabDataset,
    LabRecord, QuestionRecord, QuestionSpec, RangeQuestion,
};
pub use matcher::{match_answer, normalize_answer, MatchMode, ReferenceSet};
pub use metrics::{
    accuracy, f1_score, micro_prf, score_factors, Accuracy, ConfusionCounts, LabFactorRow, Prf, QuestionOutcome,
};
pub use runner::{
    run_eval, EvalOptions, EvalScope, FactorMetrics, LabFailure, LabRangeRow, MetricReport, QuestionRow, RangeMetrics,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no value domain for factor {factor:?} of {lab:?}")]
    MissingDomain { lab: String, factor: String },
    #[error("no prediction for: {}", .0.join(", "))]
    MissingPrediction(Vec<String>),
    #[error("question appears more than once: {lab:?} / {question:?}")]
    DuplicateQuestion { lab: String, question: String },
}
