//! Micro-averaged factor precision/recall/F1 and question/lab level accuracy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EvalError, FactorDatasetEntry};
use crate::chat::FactorSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn compare(predicted: &FactorSet, truth: &FactorSet) -> Self {
        let p: BTreeSet<&String> = predicted.names().iter().collect();
        let t: BTreeSet<&String> = truth.names().iter().collect();
        Self {
            tp: p.intersection(&t).count() as u64,
            fp: p.difference(&t).count() as u64,
            fn_: t.difference(&p).count() as u64,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision and recall from summed counts; zero denominators give 0.
pub fn micro_prf(c: &ConfusionCounts) -> Prf {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Prf {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabFactorRow {
    pub lab_name: String,
    pub truth: Vec<String>,
    pub predicted: Vec<String>,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
}

/// Per-lab set comparison, summed over labs.
pub fn score_factors(
    predictions: &BTreeMap<String, FactorSet>,
    truth: &[FactorDatasetEntry],
) -> Result<(ConfusionCounts, Vec<LabFactorRow>), EvalError> {
    let missing: Vec<String> = truth
        .iter()
        .filter(|e| !predictions.contains_key(&e.lab_name))
        .map(|e| e.lab_name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPrediction(missing));
    }
    let rows: Vec<LabFactorRow> = truth
        .iter()
        .map(|e| {
            let pred = &predictions[&e.lab_name];
            LabFactorRow {
                lab_name: e.lab_name.clone(),
                truth: e.true_factors.names().to_vec(),
                predicted: pred.names().to_vec(),
                counts: ConfusionCounts::compare(pred, &e.true_factors),
            }
        })
        .collect();
    Ok((rows.iter().map(|r| r.counts).sum(), rows))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionOutcome {
    pub lab_name: String,
    pub question_text: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Question-level accuracy: correct questions / all questions.
    pub qla: f64,
    /// Lab-level accuracy: mean over labs of each lab's fraction correct.
    pub lla: f64,
    pub correct_questions: usize,
    pub total_questions: usize,
    /// Sum over labs of each lab's fraction correct.
    pub lab_credit: f64,
    pub total_labs: usize,
}

pub fn accuracy(results: &[QuestionOutcome]) -> Result<Accuracy, EvalError> {
    let mut seen = BTreeSet::new();
    let mut per_lab: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in results {
        if !seen.insert((&r.lab_name, &r.question_text)) {
            return Err(EvalError::DuplicateQuestion {
                lab: r.lab_name.clone(),
                question: r.question_text.clone(),
            });
        }
        let e = per_lab.entry(&r.lab_name).or_default();
        e.0 += usize::from(r.correct);
        e.1 += 1;
    }
    let correct = results.iter().filter(|r| r.correct).count();
    let total = results.len();
    let lab_credit: f64 = per_lab.values().map(|&(c, n)| c as f64 / n as f64).sum();
    let labs = per_lab.len();
    Ok(Accuracy {
        qla: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        lla: if labs == 0 { 0.0 } else { lab_credit / labs as f64 },
        correct_questions: correct,
        total_questions: total,
        lab_credit,
        total_labs: labs,
    })
}
