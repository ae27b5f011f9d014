//! Prompt templates and the pieces substituted into them.

use std::path::Path;

use crate::index::RetrievalHit;

const FILES: [&str; 4] = [
    "factor_system.txt",
    "factor_user.txt",
    "range_system.txt",
    "range_user.txt",
];

/// The four templates. Placeholders are `{context}`, `{lab}` and `{factors}`;
/// leading lines starting with `#` are a header and are not sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub factor_system: String,
    pub factor_user: String,
    pub range_system: String,
    pub range_user: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::from_sources([
            include_str!("../../assets/prompts/factor_system.txt"),
            include_str!("../../assets/prompts/factor_user.txt"),
            include_str!("../../assets/prompts/range_system.txt"),
            include_str!("../../assets/prompts/range_user.txt"),
        ])
    }
}

impl PromptSet {
    /// Load replacement templates from a directory holding the four asset files.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Ok(Self::from_sources([
            &read(FILES[0])?,
            &read(FILES[1])?,
            &read(FILES[2])?,
            &read(FILES[3])?,
        ]))
    }

    fn from_sources(src: [&str; 4]) -> Self {
        Self {
            factor_system: strip_header(src[0]),
            factor_user: strip_header(src[1]),
            range_system: strip_header(src[2]),
            range_user: strip_header(src[3]),
        }
    }
}

fn strip_header(src: &str) -> String {
    src.lines()
        .skip_while(|l| l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

/// Substitute `{name}` placeholders in one pass; substituted text is not
/// scanned again, and unknown `{...}` sequences are left alone.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = vars.iter().find_map(|(name, value)| {
            let key_len = name.len() + 2;
            (tail.len() >= key_len && tail.as_bytes()[key_len - 1] == b'}' && &tail[1..key_len - 1] == *name)
                .then_some((key_len, *value))
        });
        match hit {
            Some((len, value)) => {
                out.push_str(value);
                rest = &tail[len..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Retrieved documents in rank order, each followed by its source URL.
pub fn render_context(hits: &[RetrievalHit]) -> String {
    hits.iter()
        .map(|h| format!("[{}] {}\nSource: {}", h.rank, h.text, h.url))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// `"Age: over 50; Sex: Female"`, or `"none"`. Pairs are rendered in the
/// order given.
pub fn render_factors<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let parts: Vec<String> = pairs.into_iter().map(|(k, v)| format!("{k}: {v}")).collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join("; ")
    }
}

/// Inverse of [`render_factors`].
pub fn parse_rendered_factors(s: &str) -> Vec<(String, String)> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("none") || s.is_empty() {
        return Vec::new();
    }
    s.split("; ")
        .filter_map(|part| part.split_once(": "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
