//! A stand-in model that answers from the ground-truth dataset.

use std::collections::BTreeMap;

use crate::chat::prompts::{parse_rendered_factors, render_factors};
use crate::chat::{ChatRequest, LlmError, LlmProvider, PromptKind};
use crate::eval::LabDataset;

struct OracleLab {
    name: String,
    lower: String,
    factors: Vec<String>,
    /// Lowercased factor values → ground-truth answer.
    answers: Vec<(BTreeMap<String, String>, String)>,
}

/// Finds the lab by name in the `Question:` line (longest dataset name
/// contained in it, case-insensitively) and replies with its ground truth.
/// Ignores the retrieved context entirely.
pub struct OracleProvider {
    labs: Vec<OracleLab>,
}

impl OracleProvider {
    pub fn from_dataset(dataset: &LabDataset) -> Self {
        let mut labs: Vec<OracleLab> = dataset
            .labs()
            .iter()
            .map(|lab| OracleLab {
                name: lab.lab_name.clone(),
                lower: lab.lab_name.to_lowercase(),
                factors: lab.factors.clone(),
                answers: lab
                    .questions
                    .iter()
                    .map(|q| (lower_map(&q.factor_values), q.true_answer.clone()))
                    .collect(),
            })
            .collect();
        labs.sort_by(|a, b| b.lower.len().cmp(&a.lower.len()).then_with(|| a.lower.cmp(&b.lower)));
        Self { labs }
    }

    fn find(&self, question: &str) -> Result<&OracleLab, LlmError> {
        let q = question.to_lowercase();
        self.labs
            .iter()
            .find(|lab| q.contains(&lab.lower))
            .ok_or_else(|| LlmError::UnknownLab(question.to_string()))
    }
}

fn lower_map(m: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    m.iter().map(|(k, v)| (k.to_lowercase(), v.to_lowercase())).collect()
}

fn line_value<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(label)).map(str::trim)
}

impl LlmProvider for OracleProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let question = line_value(&request.user, "Question:").unwrap_or(&request.user);
        let lab = self.find(question)?;
        match request.kind {
            PromptKind::FactorRetrieval => Ok(if lab.factors.is_empty() {
                "None".to_string()
            } else {
                lab.factors.join(", ")
            }),
            PromptKind::RangeRetrieval => {
                let given: BTreeMap<String, String> = line_value(&request.user, "Patient factors:")
                    .map(parse_rendered_factors)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
                    .collect();
                lab.answers
                    .iter()
                    .find(|(values, _)| *values == given)
                    .map(|(_, answer)| answer.clone())
                    .ok_or_else(|| LlmError::NoGroundTruth {
                        lab: lab.name.clone(),
                        factors: render_factors(given.iter().map(|(k, v)| (k.as_str(), v.as_str()))),
                    })
            }
        }
    }

    fn kind(&self) -> &'static str {
        "oracle"
    }
}
