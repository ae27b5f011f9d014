//! "Normal Results" section extraction from encyclopedia article HTML.
//!
//! The page is walked in document order. Once a heading whose text is
//! "Normal Results" is seen, text is collected until the next heading of the
//! same or a higher level. Text is grouped into segments at block element
//! boundaries; inline markup is flattened into its segment. Segments are
//! joined with a single space, except consecutive list items (and table rows),
//! which are joined with `"; "`.

use ego_tree::NodeRef;
use scraper::{Html, Node, Selector};
use thiserror::Error;

use super::{collapse_whitespace, DocumentError, LabDocument, RawPage};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("page has no \"Normal Results\" section")]
    NoNormalResults,
    #[error("\"Normal Results\" section has no text")]
    EmptySection,
    #[error("input is not HTML: {0}")]
    MalformedHtml(String),
    #[error("page has neither an <h1> nor a <title>")]
    MissingTitle,
    #[error(transparent)]
    Document(#[from] DocumentError),
}

const SECTION_TITLE: &str = "normal results";

const BLOCK_TAGS: &[&str] = &[
    "address",
    "article",
    "aside",
    "blockquote",
    "caption",
    "dd",
    "details",
    "div",
    "dl",
    "dt",
    "fieldset",
    "figcaption",
    "figure",
    "footer",
    "form",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "header",
    "hr",
    "li",
    "main",
    "nav",
    "ol",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "tbody",
    "td",
    "tfoot",
    "th",
    "thead",
    "tr",
    "ul",
];

const SKIP_TAGS: &[&str] = &["script", "style", "noscript", "template", "head"];

/// Extract the lab name and "Normal Results" text from a page.
pub fn parse_page(page: &RawPage) -> Result<LabDocument, ParseError> {
    if page.html.contains('\0') {
        return Err(ParseError::MalformedHtml("NUL byte in input".into()));
    }
    if !page.html.contains('<') {
        return Err(ParseError::MalformedHtml("no markup found".into()));
    }
    let html = Html::parse_document(&page.html);
    let lab_name = page_title(&html).ok_or(ParseError::MissingTitle)?;

    let mut collector = SectionCollector::default();
    collector.walk(html.tree.root());
    let text = match collector.state {
        State::Searching => return Err(ParseError::NoNormalResults),
        State::Collecting { .. } | State::Done => collector.finish(),
    };
    if text.is_empty() {
        return Err(ParseError::EmptySection);
    }
    Ok(LabDocument::new(&lab_name, &text, &page.url)?)
}

fn page_title(html: &Html) -> Option<String> {
    for sel in ["h1", "title"] {
        let selector = Selector::parse(sel).expect("static selector");
        if let Some(el) = html.select(&selector).next() {
            let text = collapse_whitespace(&el.text().collect::<String>());
            if !text.is_empty() {
                return Some(text);
            }
        }
    }
    None
}

/// `<link rel="canonical" href="...">`, if the page declares one.
pub(crate) fn canonical_url(source: &str) -> Option<String> {
    let html = Html::parse_document(source);
    let selector = Selector::parse(r#"link[rel="canonical"]"#).expect("static selector");
    html.select(&selector)
        .filter_map(|el| el.value().attr("href"))
        .map(str::trim)
        .find(|href| url::Url::parse(href).is_ok())
        .map(str::to_string)
}

fn heading_level(tag: &str) -> Option<u8> {
    match tag {
        "h1" => Some(1),
        "h2" => Some(2),
        "h3" => Some(3),
        "h4" => Some(4),
        "h5" => Some(5),
        "h6" => Some(6),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Searching,
    Collecting { level: u8 },
    Done,
}

struct Segment {
    text: String,
    in_item: bool,
}

struct SectionCollector {
    state: State,
    segments: Vec<Segment>,
    current: String,
    current_in_item: bool,
    item_depth: usize,
}

impl Default for SectionCollector {
    fn default() -> Self {
        Self {
            state: State::Searching,
            segments: Vec::new(),
            current: String::new(),
            current_in_item: false,
            item_depth: 0,
        }
    }
}

impl SectionCollector {
    fn walk(&mut self, node: NodeRef<'_, Node>) {
        if self.state == State::Done {
            return;
        }
        match node.value() {
            Node::Element(el) => {
                let tag = el.name();
                if SKIP_TAGS.contains(&tag) {
                    return;
                }
                if let Some(level) = heading_level(tag) {
                    if self.on_heading(node, level) {
                        return;
                    }
                }
                let collecting = matches!(self.state, State::Collecting { .. });
                if tag == "br" && collecting {
                    self.current.push(' ');
                    return;
                }
                let is_block = BLOCK_TAGS.contains(&tag);
                let is_item = tag == "li" || tag == "tr";
                if is_block && collecting {
                    self.flush();
                }
                if is_item {
                    self.item_depth += 1;
                }
                for child in node.children() {
                    self.walk(child);
                }
                if is_item {
                    self.item_depth -= 1;
                }
                if is_block && matches!(self.state, State::Collecting { .. }) {
                    self.flush();
                }
            }
            Node::Text(text) => {
                if matches!(self.state, State::Collecting { .. }) {
                    if self.current.trim().is_empty() {
                        self.current_in_item = self.item_depth > 0;
                    }
                    self.current.push_str(text);
                }
            }
            Node::Document | Node::Fragment => {
                for child in node.children() {
                    self.walk(child);
                }
            }
            _ => {}
        }
    }

    /// Returns true when the heading was consumed and its children must not be walked.
    fn on_heading(&mut self, node: NodeRef<'_, Node>, level: u8) -> bool {
        match self.state {
            State::Searching => {
                let text = collapse_whitespace(&node_text(node));
                if text.eq_ignore_ascii_case(SECTION_TITLE) {
                    self.state = State::Collecting { level };
                }
                true
            }
            State::Collecting { level: open } if level <= open => {
                self.flush();
                self.state = State::Done;
                true
            }
            // Sub-headings inside the section are ordinary blocks.
            State::Collecting { .. } | State::Done => false,
        }
    }

    fn flush(&mut self) {
        let text = collapse_whitespace(&self.current);
        if !text.is_empty() {
            self.segments.push(Segment {
                text,
                in_item: self.current_in_item,
            });
        }
        self.current.clear();
        self.current_in_item = false;
    }

    fn finish(mut self) -> String {
        self.flush();
        let mut out = String::new();
        let mut prev_item = false;
        for (i, seg) in self.segments.iter().enumerate() {
            if i > 0 {
                out.push_str(if prev_item && seg.in_item { "; " } else { " " });
            }
            out.push_str(&seg.text);
            prev_item = seg.in_item;
        }
        out
    }
}

fn node_text(node: NodeRef<'_, Node>) -> String {
    node.descendants()
        .filter_map(|n| match n.value() {
            Node::Text(t) => Some(&**t),
            _ => None,
        })
        .collect()
}
