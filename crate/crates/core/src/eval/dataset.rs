//! The combined ground-truth file: one JSON object per lab holding its true
//! factors and its range questions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EvalError;
use crate::chat::{FactorSet, FactorVocabulary};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRecord {
    pub factor_values: BTreeMap<String, String>,
    pub question_text: String,
    pub true_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabRecord {
    pub lab_name: String,
    /// Canonical names in canonical order; empty for labs without factors.
    pub factors: Vec<String>,
    pub questions: Vec<QuestionRecord>,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorDatasetEntry {
    pub lab_name: String,
    pub true_factors: FactorSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RangeQuestion {
    pub lab_name: String,
    pub factor_values: BTreeMap<String, String>,
    pub question_text: String,
    pub true_answer: String,
    pub url: String,
}

/// A generated question without its answer. Factor values are in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionSpec {
    pub lab_name: String,
    pub factor_values: Vec<(String, String)>,
    pub question_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabDataset {
    labs: Vec<LabRecord>,
}

/// "What is the normal range of {lab}?"
pub fn base_question(lab: &str) -> String {
    format!("What is the normal range of {lab}?")
}

/// The base question, with " given Age: over 50, Sex: Female" before the
/// question mark when there are factor values.
pub fn question_text(lab: &str, values: &[(String, String)]) -> String {
    if values.is_empty() {
        return base_question(lab);
    }
    let given: Vec<String> = values.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    format!("What is the normal range of {lab} given {}?", given.join(", "))
}

/// Values each factor takes across a lab's questions, in order of first appearance.
pub fn value_domains(lab: &LabRecord) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for f in &lab.factors {
        out.entry(f.clone()).or_default();
    }
    for q in &lab.questions {
        for (k, v) in &q.factor_values {
            let d = out.entry(k.clone()).or_default();
            if !d.contains(v) {
                d.push(v.clone());
            }
        }
    }
    out
}

/// Every combination of factor values, first factor varying slowest.
pub fn expand_questions(
    entry: &FactorDatasetEntry,
    domains: &BTreeMap<String, Vec<String>>,
) -> Result<Vec<QuestionSpec>, EvalError> {
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for factor in entry.true_factors.names() {
        let domain = domains
            .get(factor)
            .filter(|d| !d.is_empty())
            .ok_or_else(|| EvalError::MissingDomain {
                lab: entry.lab_name.clone(),
                factor: factor.clone(),
            })?;
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                domain.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push((factor.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    Ok(combos
        .into_iter()
        .map(|values| QuestionSpec {
            lab_name: entry.lab_name.clone(),
            question_text: question_text(&entry.lab_name, &values),
            factor_values: values,
        })
        .collect())
}

impl LabDataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut labs = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LabRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            labs.push(rec);
            lines.push(i + 1);
        }
        Self::validate(labs, &lines)
    }

    pub fn from_records(labs: Vec<LabRecord>) -> Result<Self, DatasetError> {
        let lines: Vec<usize> = (1..=labs.len()).collect();
        Self::validate(labs, &lines)
    }

    fn validate(labs: Vec<LabRecord>, lines: &[usize]) -> Result<Self, DatasetError> {
        let vocab = FactorVocabulary::builtin();
        let mut names = BTreeSet::new();
        for (lab, &line) in labs.iter().zip(lines) {
            let err = |message: String| DatasetError::Schema { line, message };
            if lab.lab_name.trim().is_empty() || lab.lab_name.trim() != lab.lab_name {
                return Err(err("lab_name must be non-empty and trimmed".into()));
            }
            if !names.insert(lab.lab_name.to_lowercase()) {
                return Err(err(format!("duplicate lab {:?}", lab.lab_name)));
            }
            let canonical = FactorSet::new(&lab.factors, &vocab);
            if canonical.names() != lab.factors.as_slice() {
                return Err(err(format!(
                    "factors {:?} are not canonical (expected {:?})",
                    lab.factors,
                    canonical.names()
                )));
            }
            if lab.questions.is_empty() {
                return Err(err(format!("{:?} has no questions", lab.lab_name)));
            }
            if lab.factors.is_empty() && lab.questions.len() != 1 {
                return Err(err(format!("{:?} has no factors but several questions", lab.lab_name)));
            }
            let mut combos = BTreeSet::new();
            for q in &lab.questions {
                let keys: Vec<&String> = q.factor_values.keys().collect();
                let mut expected: Vec<&String> = lab.factors.iter().collect();
                expected.sort();
                if keys != expected {
                    return Err(err(format!(
                        "question {:?} has factor values for {keys:?}, expected {expected:?}",
                        q.question_text
                    )));
                }
                let ordered: Vec<(String, String)> = lab
                    .factors
                    .iter()
                    .map(|f| (f.clone(), q.factor_values[f].clone()))
                    .collect();
                let text = question_text(&lab.lab_name, &ordered);
                if q.question_text != text {
                    return Err(err(format!("question text {:?} should be {text:?}", q.question_text)));
                }
                if q.true_answer.trim().is_empty() {
                    return Err(err(format!("empty true_answer for {:?}", q.question_text)));
                }
                if !combos.insert(&q.factor_values) {
                    return Err(err(format!("duplicate question {:?}", q.question_text)));
                }
            }
        }
        Ok(Self { labs })
    }

    pub fn labs(&self) -> &[LabRecord] {
        &self.labs
    }

    pub fn len(&self) -> usize {
        self.labs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labs.is_empty()
    }

    pub fn get(&self, lab_name: &str) -> Option<&LabRecord> {
        self.labs.iter().find(|l| l.lab_name == lab_name)
    }

    pub fn factor_entries(&self) -> Vec<FactorDatasetEntry> {
        let vocab = FactorVocabulary::builtin();
        self.labs
            .iter()
            .map(|l| FactorDatasetEntry {
                lab_name: l.lab_name.clone(),
                true_factors: FactorSet::new(&l.factors, &vocab),
            })
            .collect()
    }

    pub fn range_questions(&self) -> Vec<RangeQuestion> {
        self.labs
            .iter()
            .flat_map(|l| {
                l.questions.iter().map(|q| RangeQuestion {
                    lab_name: l.lab_name.clone(),
                    factor_values: q.factor_values.clone(),
                    question_text: q.question_text.clone(),
                    true_answer: q.true_answer.clone(),
                    url: l.url.clone(),
                })
            })
            .collect()
    }
}
