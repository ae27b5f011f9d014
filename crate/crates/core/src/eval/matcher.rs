//! Answer comparison for range retrieval.
//!
//! Both sides are normalized before comparing: lower case, whitespace runs
//! collapsed, dash variants folded to '-', thousands separators dropped,
//! trailing periods removed, and numeric ranges written as "a-b" whether the
//! source said "a to b", "a - b" or "a–b". Units and all other text must then
//! match exactly.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    #[default]
    Exact,
    AnyReference,
}

pub fn normalize_answer(s: &str) -> String {
    static THOUSANDS: OnceLock<Regex> = OnceLock::new();
    static RANGE: OnceLock<Regex> = OnceLock::new();
    let thousands = THOUSANDS.get_or_init(|| Regex::new(r"(\d),(\d{3})\b").expect("valid regex"));
    let range =
        RANGE.get_or_init(|| Regex::new(r"(\d+(?:\.\d+)?)\s*(?:-|\bto\b)\s*(-?\d+(?:\.\d+)?)").expect("valid regex"));

    let mut t: String = s
        .to_lowercase()
        .chars()
        .map(|c| match c {
            '\u{2010}'..='\u{2015}' | '\u{2212}' | '\u{fe58}' | '\u{fe63}' | '\u{ff0d}' => '-',
            c => c,
        })
        .collect();
    t = t.split_whitespace().collect::<Vec<_>>().join(" ");
    // "1,000,000" needs two passes because matches cannot overlap.
    loop {
        let next = thousands.replace_all(&t, "$1$2").into_owned();
        if next == t {
            break;
        }
        t = next;
    }
    t = range.replace_all(&t, "$1-$2").into_owned();
    t.trim_end_matches(|c: char| c == '.' || c.is_whitespace()).to_string()
}

/// Exact mode compares against `truth` only; any-reference mode also accepts
/// a match against any of `references`.
pub fn match_answer(predicted: &str, truth: &str, references: &[String], mode: MatchMode) -> bool {
    let p = normalize_answer(predicted);
    if p.is_empty() {
        return false;
    }
    if p == normalize_answer(truth) {
        return true;
    }
    mode == MatchMode::AnyReference && references.iter().any(|r| normalize_answer(r) == p)
}

/// Accepted alternative answers per question text, for any-reference mode.
/// File format: JSON Lines of `{"question_text": ..., "references": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReferenceSet {
    by_question: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceLine {
    question_text: String,
    references: Vec<String>,
}

impl ReferenceSet {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)?;
        let mut set = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReferenceLine = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            set.insert(rec.question_text, rec.references);
        }
        Ok(set)
    }

    pub fn insert(&mut self, question_text: String, references: Vec<String>) {
        self.by_question.entry(question_text).or_default().extend(references);
    }

    pub fn get(&self, question_text: &str) -> &[String] {
        self.by_question.get(question_text).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_question.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_question.is_empty()
    }
}
