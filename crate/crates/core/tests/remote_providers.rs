//! Remote embedding and chat clients against a loopback axum server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use labrag_core::chat::{ChatRequest, LlmError, LlmProvider, PromptKind, RemoteChatProvider, ReplayProvider};
use labrag_core::embedding::{Embedder, EmbeddingError, RemoteEmbedder};
use labrag_core::RetryPolicy;
use proptest::prelude::*;
use serde_json::{json, Value};

const KEY: &str = "sk-test-0123456789";

/// Serve `router` on an ephemeral loopback port from a background runtime.
fn serve(router: Router) -> String {
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

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        base_delay: Duration::from_millis(5),
    }
}

#[derive(Clone, Default)]
struct Mock {
    calls: Arc<AtomicUsize>,
    /// Statuses returned before the first success; the last one repeats.
    failures: Arc<Vec<u16>>,
    dim: usize,
}

impl Mock {
    fn with(failures: &[u16], dim: usize) -> Self {
        Self {
            calls: Arc::default(),
            failures: Arc::new(failures.to_vec()),
            dim,
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn next_failure(&self) -> Option<u16> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        match self.failures.last() {
            Some(&s) if s == 401 || s == 500 => Some(s),
            _ => self.failures.get(n).copied(),
        }
    }
}

fn authorized(headers: &HeaderMap) -> bool {
    headers.get("authorization").and_then(|v| v.to_str().ok()) == Some(&format!("Bearer {KEY}"))
}

/// Each text embeds to a one-hot vector at `len(text) % dim`; items are
/// returned in reverse order to exercise index sorting.
async fn embeddings(
    State(mock): State<Mock>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    if let Some(status) = mock.next_failure() {
        return (
            StatusCode::from_u16(status).unwrap(),
            Json(json!({"error": "try later"})),
        );
    }
    if !authorized(&headers) {
        return (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})));
    }
    if body["dimensions"].as_u64().is_none() {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "dimensions required"})));
    }
    let inputs = body["input"].as_array().unwrap();
    let mut data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut v = vec![0.0; mock.dim];
            v[t.as_str().unwrap().len() % mock.dim] = 2.0;
            json!({"index": i, "embedding": v})
        })
        .collect();
    data.reverse();
    (StatusCode::OK, Json(json!({"data": data})))
}

async fn chat(State(mock): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    if let Some(status) = mock.next_failure() {
        return (StatusCode::from_u16(status).unwrap(), Json(json!({"error": "busy"})));
    }
    if !authorized(&headers) {
        return (StatusCode::UNAUTHORIZED, Json(json!({})));
    }
    assert_eq!(body["temperature"], 0.0);
    let user = body["messages"][1]["content"].as_str().unwrap();
    let reply = format!("echo: {user}");
    (
        StatusCode::OK,
        Json(json!({"choices": [{"message": {"role": "assistant", "content": reply}}]})),
    )
}

fn embed_server(mock: &Mock) -> String {
    serve(
        Router::new()
            .route("/v1/embeddings", post(embeddings))
            .with_state(mock.clone()),
    ) + "/v1/embeddings"
}

fn chat_server(mock: &Mock) -> String {
    serve(Router::new().route("/v1/chat", post(chat)).with_state(mock.clone())) + "/v1/chat"
}

fn embedder(url: &str, key: &str, dim: usize) -> RemoteEmbedder {
    RemoteEmbedder::new(url, "text-embedding-3-large", dim, key.into(), 2)
        .unwrap()
        .with_retry(fast_retry())
}

#[test]
fn embeddings_are_normalized_and_ordered() {
    let mock = Mock::with(&[], 8);
    let e = embedder(&embed_server(&mock), KEY, 8);
    let texts: Vec<String> = (1..=130).map(|n| "x".repeat(n)).collect();
    let vs = e.embed_batch(&texts).unwrap();
    assert_eq!(vs.len(), 130);
    for (t, v) in texts.iter().zip(&vs) {
        assert_eq!(v.values()[t.len() % 8], 1.0);
        assert_eq!(v.provider_tag(), "remote:text-embedding-3-large:8");
    }
    // 130 texts in chunks of 64.
    assert_eq!(mock.calls(), 3);
}

#[test]
fn rate_limits_are_retried() {
    let mock = Mock::with(&[429, 503], 4);
    let e = embedder(&embed_server(&mock), KEY, 4);
    assert!(e.embed("abc").is_ok());
    assert_eq!(mock.calls(), 3);
}

#[test]
fn persistent_server_errors_give_up_after_the_retry_budget() {
    let mock = Mock::with(&[500], 4);
    let e = embedder(&embed_server(&mock), KEY, 4);
    match e.embed("abc") {
        Err(EmbeddingError::Remote { status, attempts, .. }) => {
            assert_eq!(status, Some(500));
            assert_eq!(attempts, 3);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(mock.calls(), 3);
}

#[test]
fn bad_key_is_an_auth_error_without_retries() {
    let mock = Mock::with(&[], 4);
    let secret = "sk-wrong-key-do-not-print";
    let e = embedder(&embed_server(&mock), secret, 4);
    let err = e.embed("abc").unwrap_err();
    assert!(matches!(err, EmbeddingError::Auth(_)), "{err:?}");
    assert_eq!(mock.calls(), 1);
    assert!(!err.to_string().contains(secret));
    assert!(!format!("{err:?}").contains(secret));
}

#[test]
fn wrong_dimension_is_rejected() {
    let mock = Mock::with(&[], 6);
    let e = RemoteEmbedder::new(&embed_server(&mock), "m", 4, KEY.into(), 1)
        .unwrap()
        .with_retry(fast_retry());
    // The mock always answers with 6 components.
    match e.embed("abc") {
        Err(EmbeddingError::DimMismatch { expected: 4, got: 6 }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let e = embedder("http://127.0.0.1:9/v1/embeddings", KEY, 4);
    match e.embed("abc") {
        Err(EmbeddingError::Remote {
            status: None,
            attempts: 3,
            ..
        }) => {}
        other => panic!("{other:?}"),
    }
}

fn request(user: &str) -> ChatRequest {
    ChatRequest::new(PromptKind::RangeRetrieval, "system".into(), user.into(), "gpt-4-turbo")
}

#[test]
fn chat_reads_first_choice_and_retries() {
    let mock = Mock::with(&[503], 0);
    let p = RemoteChatProvider::new(&chat_server(&mock), KEY.into(), 1)
        .unwrap()
        .with_retry(fast_retry());
    assert_eq!(p.complete(&request("Question: x")).unwrap(), "echo: Question: x");
    assert_eq!(mock.calls(), 2);
    assert_eq!(p.kind(), "remote-chat");
}

#[test]
fn chat_rejects_non_zero_temperature() {
    let p = RemoteChatProvider::new("http://127.0.0.1:9/v1/chat", KEY.into(), 1).unwrap();
    let mut r = request("q");
    r.temperature = 0.7;
    assert!(matches!(p.complete(&r), Err(LlmError::Config(_))));
}

#[test]
fn recorded_remote_replies_replay_offline() {
    let mock = Mock::with(&[], 0);
    let remote = Arc::new(
        RemoteChatProvider::new(&chat_server(&mock), KEY.into(), 1)
            .unwrap()
            .with_retry(fast_retry()),
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let recorder = ReplayProvider::record(&path, remote).unwrap();
    assert_eq!(recorder.complete(&request("a")).unwrap(), "echo: a");
    assert_eq!(recorder.complete(&request("a")).unwrap(), "echo: a");
    assert_eq!(mock.calls(), 1);

    let strict = ReplayProvider::open(&path).unwrap();
    assert_eq!(strict.complete(&request("a")).unwrap(), "echo: a");
    assert!(matches!(
        strict.complete(&request("b")),
        Err(LlmError::MissingRecording { .. })
    ));
    assert_eq!(mock.calls(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn keys_never_appear_in_debug_output(key in "sk-[A-Za-z0-9]{16,40}") {
        let e = RemoteEmbedder::new("http://127.0.0.1:9/e", "m", 4, key.clone(), 1).unwrap();
        let c = RemoteChatProvider::new("http://127.0.0.1:9/c", key.clone(), 1).unwrap();
        let shown = format!("{e:?} {c:?}");
        prop_assert!(!shown.contains(&key), "key leaked into {}", shown);
    }
}
