//! Crawler against a loopback site.

use axum::http::StatusCode;
use axum::routing::get;
use axum::Router;
use labrag_core::ingest::{crawl, parse_page, CrawlConfig, CrawlError};

fn page(name: &str, range: &str) -> String {
    format!("<html><head><title>{name}</title></head><body><h1>{name}</h1><h2>Normal Results</h2><p>{range}</p><h2>Risks</h2></body></html>")
}

fn site() -> String {
    let router = Router::new()
        .route("/robots.txt", get(|| async { "User-agent: *\nDisallow: /private/\n" }))
        .route(
            "/ency/article/1.htm",
            get(|| async { page("Aldolase blood test", "1.0 to 7.5 units per liter") }),
        )
        .route(
            "/ency/article/2.htm",
            get(|| async { page("Renin", "0.6 to 4.3 ng/mL/hour") }),
        )
        .route(
            "/ency/article/3.htm",
            get(|| async { page("Zinc", "60 to 120 mcg/dL") }),
        )
        .route("/private/4.htm", get(|| async { page("Secret", "1") }))
        .fallback(|| async { (StatusCode::NOT_FOUND, "not here") });
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(1)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn config() -> CrawlConfig {
    CrawlConfig::default().with_rate(0.0)
}

fn urls(base: &str, paths: &[&str]) -> Vec<String> {
    paths.iter().map(|p| format!("{base}{p}")).collect()
}

#[test]
fn three_pages_fetched_in_order() {
    let base = site();
    let report = crawl(
        &urls(
            &base,
            &["/ency/article/1.htm", "/ency/article/2.htm", "/ency/article/3.htm"],
        ),
        &config(),
    )
    .unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let names: Vec<String> = report
        .pages
        .iter()
        .map(|p| parse_page(p).unwrap().lab_name().to_string())
        .collect();
    assert_eq!(names, ["Aldolase blood test", "Renin", "Zinc"]);
}

#[test]
fn duplicate_urls_are_fetched_once() {
    let base = site();
    let report = crawl(&urls(&base, &["/ency/article/1.htm", "/ency/article/1.htm"]), &config()).unwrap();
    assert_eq!(report.pages.len(), 1);
    assert!(report.failures.is_empty());
}

#[test]
fn a_missing_page_is_a_partial_failure() {
    let base = site();
    let report = crawl(
        &urls(
            &base,
            &["/ency/article/1.htm", "/ency/article/404.htm", "/ency/article/3.htm"],
        ),
        &config(),
    )
    .unwrap();
    assert_eq!(report.pages.len(), 2);
    assert_eq!(report.failures.len(), 1);
    assert!(report.failures[0].url.ends_with("/404.htm"));
    assert_eq!(report.failures[0].reason, "HTTP 404");
}

#[test]
fn robots_disallow_is_honoured() {
    let base = site();
    let list = urls(&base, &["/ency/article/2.htm", "/private/4.htm"]);
    let report = crawl(&list, &config()).unwrap();
    assert_eq!(report.pages.len(), 1);
    assert_eq!(report.failures[0].reason, "disallowed by robots.txt");

    let mut ignore = config();
    ignore.respect_robots = false;
    assert_eq!(crawl(&list, &ignore).unwrap().pages.len(), 2);
}

#[test]
fn nothing_fetched_is_an_error() {
    let base = site();
    match crawl(&urls(&base, &["/ency/article/404.htm"]), &config()) {
        Err(CrawlError::AllFailed(f)) => assert_eq!(f.len(), 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn requests_are_spaced_by_the_rate_limit() {
    let base = site();
    let start = std::time::Instant::now();
    // robots.txt plus two pages at 20 requests per second.
    crawl(
        &urls(&base, &["/ency/article/1.htm", "/ency/article/2.htm"]),
        &CrawlConfig::default().with_rate(20.0),
    )
    .unwrap();
    assert!(start.elapsed() >= std::time::Duration::from_millis(100));
}
