//! Polite sequential fetcher for encyclopedia pages.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use chrono::Utc;
use scraper::{Html, Selector};
use thiserror::Error;
use url::Url;

use super::RawPage;

#[derive(Debug, Clone)]
pub struct CrawlConfig {
    pub user_agent: String,
    /// Minimum spacing between any two requests, robots.txt fetches included.
    pub min_interval: Duration,
    pub timeout: Duration,
    pub respect_robots: bool,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self {
            user_agent: format!(
                "labrag-ingest/{} (reference-range research crawler)",
                env!("CARGO_PKG_VERSION")
            ),
            min_interval: Duration::from_secs(1),
            timeout: Duration::from_secs(30),
            respect_robots: true,
        }
    }
}

impl CrawlConfig {
    /// `rate` is requests per second.
    pub fn with_rate(mut self, rate: f64) -> Self {
        self.min_interval = if rate > 0.0 {
            Duration::from_secs_f64(1.0 / rate)
        } else {
            Duration::ZERO
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrawlFailure {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct CrawlReport {
    pub pages: Vec<RawPage>,
    pub failures: Vec<CrawlFailure>,
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("no urls to crawl")]
    NoUrls,
    #[error("all {} fetches failed; first: {}", .0.len(), .0.first().map(|f| format!("{} ({})", f.url, f.reason)).unwrap_or_default())]
    AllFailed(Vec<CrawlFailure>),
    #[error("could not build http client: {0}")]
    Client(String),
}

/// Fetch each distinct URL once, in input order. Individual failures are
/// collected in the report; the call only fails if nothing could be fetched.
pub fn crawl(urls: &[String], config: &CrawlConfig) -> Result<CrawlReport, CrawlError> {
    let mut seen = BTreeSet::new();
    let urls: Vec<&String> = urls.iter().filter(|u| seen.insert(u.trim().to_string())).collect();
    if urls.is_empty() {
        return Err(CrawlError::NoUrls);
    }
    let client = reqwest::blocking::Client::builder()
        .user_agent(config.user_agent.clone())
        .timeout(config.timeout)
        .build()
        .map_err(|e| CrawlError::Client(e.to_string()))?;

    let mut fetcher = Fetcher {
        client,
        interval: config.min_interval,
        last: None,
    };
    let mut robots: HashMap<String, Robots> = HashMap::new();
    let mut report = CrawlReport::default();

    for raw in urls {
        let fail = |reason: String| CrawlFailure {
            url: raw.clone(),
            reason,
        };
        let url = match Url::parse(raw.trim()) {
            Ok(u) if u.scheme() == "http" || u.scheme() == "https" => u,
            Ok(u) => {
                report.failures.push(fail(format!("unsupported scheme {}", u.scheme())));
                continue;
            }
            Err(e) => {
                report.failures.push(fail(format!("invalid url: {e}")));
                continue;
            }
        };
        if config.respect_robots {
            let origin = url.origin().ascii_serialization();
            let rules = robots
                .entry(origin.clone())
                .or_insert_with(|| fetcher.robots(&origin, &config.user_agent));
            if !rules.allows(url.path()) {
                report.failures.push(fail("disallowed by robots.txt".into()));
                continue;
            }
        }
        match fetcher.get(url.as_str()) {
            Ok(html) => match RawPage::new(url.as_str(), html, Utc::now()) {
                Ok(page) => report.pages.push(page),
                Err(e) => report.failures.push(fail(e.to_string())),
            },
            Err(reason) => {
                tracing::warn!(url = %url, "fetch failed: {reason}");
                report.failures.push(fail(reason));
            }
        }
    }

    if report.pages.is_empty() {
        return Err(CrawlError::AllFailed(report.failures));
    }
    Ok(report)
}

struct Fetcher {
    client: reqwest::blocking::Client,
    interval: Duration,
    last: Option<Instant>,
}

impl Fetcher {
    fn wait_turn(&mut self) {
        if let Some(last) = self.last {
            let elapsed = last.elapsed();
            if elapsed < self.interval {
                std::thread::sleep(self.interval - elapsed);
            }
        }
        self.last = Some(Instant::now());
    }

    fn get(&mut self, url: &str) -> Result<String, String> {
        self.wait_turn();
        let resp = self.client.get(url).send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {}", status.as_u16()));
        }
        resp.text().map_err(|e| e.to_string())
    }

    /// A missing or unreadable robots.txt allows everything.
    fn robots(&mut self, origin: &str, user_agent: &str) -> Robots {
        match self.get(&format!("{origin}/robots.txt")) {
            Ok(body) => Robots::parse(&body, user_agent),
            Err(e) => {
                tracing::debug!("no robots.txt at {origin}: {e}");
                Robots::default()
            }
        }
    }
}

/// The subset of robots.txt this crawler honours: `User-agent`, `Allow` and
/// `Disallow` with plain path prefixes. The longest matching rule wins and
/// `Allow` wins a tie.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(crate) struct Robots {
    rules: Vec<(bool, String)>,
}

impl Robots {
    pub(crate) fn parse(body: &str, user_agent: &str) -> Self {
        let token = user_agent
            .split(['/', ' '])
            .next()
            .unwrap_or_default()
            .to_ascii_lowercase();
        let mut specific = Vec::new();
        let mut wildcard = Vec::new();
        let mut group_agents: Vec<String> = Vec::new();
        let mut in_rules = false;

        for line in body.lines() {
            let line = line.split('#').next().unwrap_or_default().trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if in_rules {
                        group_agents.clear();
                        in_rules = false;
                    }
                    group_agents.push(value.to_ascii_lowercase());
                }
                "allow" | "disallow" => {
                    in_rules = true;
                    if value.is_empty() {
                        continue;
                    }
                    let rule = (key == "allow", value.to_string());
                    if !token.is_empty() && group_agents.iter().any(|a| a == &token) {
                        specific.push(rule);
                    } else if group_agents.iter().any(|a| a == "*") {
                        wildcard.push(rule);
                    }
                }
                _ => {}
            }
        }
        Self {
            rules: if specific.is_empty() { wildcard } else { specific },
        }
    }

    pub(crate) fn allows(&self, path: &str) -> bool {
        self.rules
            .iter()
            .filter(|(_, prefix)| path.starts_with(prefix.as_str()))
            .max_by_key(|(allow, prefix)| (prefix.len(), *allow))
            .is_none_or(|(allow, _)| *allow)
    }
}

/// Absolute URLs of encyclopedia article links on an index page, in page
/// order without repeats.
pub fn article_links(html: &str, base_url: &str) -> Vec<String> {
    let Ok(base) = Url::parse(base_url) else {
        return Vec::new();
    };
    let doc = Html::parse_document(html);
    let selector = Selector::parse("a[href]").expect("static selector");
    let mut seen = BTreeSet::new();
    doc.select(&selector)
        .filter_map(|a| a.value().attr("href"))
        .filter_map(|href| base.join(href.trim()).ok())
        .filter(|u| is_article_path(u.path()))
        .map(|mut u| {
            u.set_fragment(None);
            u.to_string()
        })
        .filter(|u| seen.insert(u.clone()))
        .collect()
}

fn is_article_path(path: &str) -> bool {
    path.strip_prefix("/ency/article/")
        .and_then(|rest| rest.strip_suffix(".htm"))
        .is_some_and(|num| !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()))
}
