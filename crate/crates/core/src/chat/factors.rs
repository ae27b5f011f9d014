//! Factor names, their canonical spelling and order, and the follow-up
//! questions asked for them.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

const BUILTIN: &str = include_str!("../../assets/factors.toml");

/// Canonical factor names, alias map and fixed choice tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorVocabulary {
    order: Vec<String>,
    aliases: HashMap<String, String>,
    choices: BTreeMap<String, Vec<String>>,
    /// Lowercase form of every name that is canonical by definition.
    known: HashMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyFile {
    order: Vec<String>,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
    #[serde(default)]
    choices: BTreeMap<String, Vec<String>>,
}

impl FactorVocabulary {
    /// The vocabulary shipped with the crate.
    pub fn builtin() -> Arc<Self> {
        static CELL: OnceLock<Arc<FactorVocabulary>> = OnceLock::new();
        CELL.get_or_init(|| Arc::new(Self::from_toml(BUILTIN).expect("bundled factors.toml is valid")))
            .clone()
    }

    pub fn from_toml(source: &str) -> Result<Self, String> {
        let file: VocabularyFile = toml::from_str(source).map_err(|e| e.to_string())?;
        let mut known = HashMap::new();
        for name in file
            .order
            .iter()
            .chain(file.choices.keys())
            .chain(file.aliases.values())
        {
            known.insert(name.to_lowercase(), name.clone());
        }
        for (factor, values) in &file.choices {
            if values.len() < 2 {
                return Err(format!("factor {factor:?} needs at least two choices"));
            }
            let mut lower: Vec<_> = values.iter().map(|v| v.to_lowercase()).collect();
            lower.sort();
            lower.dedup();
            if lower.len() != values.len() {
                return Err(format!("factor {factor:?} has duplicate choices"));
            }
        }
        Ok(Self {
            order: file.order,
            aliases: file.aliases.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
            choices: file.choices,
            known,
        })
    }

    /// Trim, map aliases, and fix capitalization. `None` for blank input.
    ///
    /// Names outside the vocabulary get sentence case: the first letter is
    /// upper-cased and the remaining words lower-cased, except words that
    /// already carry an inner capital ("pH", "HbA1c"), which are kept.
    pub fn canonicalize(&self, raw: &str) -> Option<String> {
        let cleaned = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        let cleaned = cleaned.trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ';'));
        if cleaned.is_empty() {
            return None;
        }
        let lower = cleaned.to_lowercase();
        if let Some(name) = self.aliases.get(&lower).or_else(|| self.known.get(&lower)) {
            return Some(name.clone());
        }
        Some(sentence_case(cleaned))
    }

    fn order_key(&self, name: &str) -> (usize, String) {
        let pos = self.order.iter().position(|o| o == name).unwrap_or(self.order.len());
        (pos, name.to_lowercase())
    }

    pub fn fixed_choices(&self, factor: &str) -> Option<&[String]> {
        self.choices.get(factor).map(Vec::as_slice)
    }
}

fn sentence_case(s: &str) -> String {
    s.split(' ')
        .enumerate()
        .map(|(i, word)| {
            let inner_caps = word.chars().skip(1).any(char::is_uppercase);
            let word = if inner_caps {
                word.to_string()
            } else {
                word.to_lowercase()
            };
            if i == 0 {
                let mut chars = word.chars();
                chars
                    .next()
                    .map(|c| c.to_uppercase().chain(chars).collect())
                    .unwrap_or_default()
            } else {
                word
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A set of canonical factor names kept in canonical order. Empty means the
/// model answered "None".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorSet(Vec<String>);

impl FactorSet {
    pub fn new<I, S>(names: I, vocab: &FactorVocabulary) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = names
            .into_iter()
            .filter_map(|n| vocab.canonicalize(n.as_ref()))
            .collect();
        out.sort_by_key(|n| vocab.order_key(n));
        out.dedup();
        Self(out)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|n| n == name)
    }
}

/// Parse a factor-retrieval response: either "None" or a list of factor
/// names separated by commas, semicolons or newlines. List markers and a
/// leading "Factors:" label are tolerated. Anything that does not look like a
/// short name (contains ':' or runs longer than six words) is rejected.
pub fn parse_factor_response(response: &str, vocab: &FactorVocabulary) -> Result<FactorSet, String> {
    static LABEL: OnceLock<Regex> = OnceLock::new();
    static MARKER: OnceLock<Regex> = OnceLock::new();
    let label = LABEL.get_or_init(|| Regex::new(r"(?i)^\s*(relevant\s+)?factors?\s*:\s*").expect("valid regex"));
    let marker = MARKER.get_or_init(|| Regex::new(r"^(?:[-*•]+|\d+[.)]|\(\d+\))\s*").expect("valid regex"));

    let body = label.replace(response.trim(), "");
    let body = body.trim().trim_matches(['"', '\'', '`']).trim();
    if is_none(body) {
        return Ok(FactorSet::empty());
    }
    let mut names = Vec::new();
    for item in body.split([',', ';', '\n']) {
        let item = marker.replace(item.trim(), "");
        let item = item.trim().trim_end_matches('.').trim();
        let item = item
            .strip_prefix("and ")
            .or_else(|| item.strip_prefix("or "))
            .unwrap_or(item)
            .trim();
        if item.is_empty() || is_none(item) {
            continue;
        }
        if item.contains(':') || item.split_whitespace().count() > 6 {
            return Err(format!("{item:?} is not a factor name"));
        }
        names.push(item.to_string());
    }
    if names.is_empty() {
        return Err("response lists no factors".into());
    }
    Ok(FactorSet::new(names, vocab))
}

fn is_none(s: &str) -> bool {
    s.trim_end_matches('.').trim().eq_ignore_ascii_case("none")
}

/// One follow-up question. Free-text questions may have no listed choices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorQuestion {
    pub factor: String,
    pub choices: Vec<String>,
    pub allows_free_text: bool,
}

impl FactorQuestion {
    /// Accept `value` for this question, returning the stored spelling.
    /// Listed choices match case-insensitively and are stored as listed.
    pub fn accept(&self, value: &str) -> Option<String> {
        let value = value.split_whitespace().collect::<Vec<_>>().join(" ");
        if value.is_empty() {
            return None;
        }
        if let Some(c) = self.choices.iter().find(|c| c.eq_ignore_ascii_case(&value)) {
            return Some(c.clone());
        }
        self.allows_free_text.then_some(value)
    }
}

/// Age thresholds mentioned in a document ("over 50", "18 to 64 years"),
/// in order of first appearance.
pub fn mine_age_choices(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\b(\d+ to \d+ years|(?:over|under) \d+)\b").expect("valid regex"));
    let mut out: Vec<String> = Vec::new();
    for m in re.find_iter(text) {
        let s = m.as_str().to_string();
        if !out.iter().any(|o| o.eq_ignore_ascii_case(&s)) {
            out.push(s);
        }
    }
    out
}

/// One question per factor, in canonical order. `document` is the text of
/// the hit the question is about; Age choices are mined from it.
pub fn make_factor_questions(factors: &FactorSet, document: &str, vocab: &FactorVocabulary) -> Vec<FactorQuestion> {
    factors
        .names()
        .iter()
        .map(|factor| {
            if let Some(choices) = vocab.fixed_choices(factor) {
                return FactorQuestion {
                    factor: factor.clone(),
                    choices: choices.to_vec(),
                    allows_free_text: false,
                };
            }
            let choices = if factor == "Age" {
                Some(mine_age_choices(document))
                    .filter(|c| c.len() >= 2)
                    .unwrap_or_default()
            } else {
                Vec::new()
            };
            FactorQuestion {
                factor: factor.clone(),
                choices,
                allows_free_text: true,
            }
        })
        .collect()
}
