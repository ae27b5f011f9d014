//! OpenAI-style `chat/completions` client.

use std::fmt;
use std::time::Duration;

use serde_json::{json, Value};

use crate::chat::{ChatRequest, LlmError, LlmProvider};
use crate::http::{post_json, HttpFailure, InflightLimit, RetryPolicy, Secret};

pub struct RemoteChatProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    key: Secret,
    retry: RetryPolicy,
    inflight: InflightLimit,
}

impl fmt::Debug for RemoteChatProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteChatProvider")
            .field("endpoint", &self.endpoint)
            .field("key", &self.key)
            .finish_non_exhaustive()
    }
}

impl RemoteChatProvider {
    pub fn new(endpoint: &str, api_key: String, max_inflight: usize) -> Result<Self, LlmError> {
        url::Url::parse(endpoint).map_err(|e| LlmError::Config(format!("bad endpoint_url {endpoint:?}: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            key: Secret::new(api_key),
            retry: RetryPolicy::default(),
            inflight: InflightLimit::new(max_inflight),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl LlmProvider for RemoteChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        if request.temperature != 0.0 {
            return Err(LlmError::Config("temperature must be 0.0".into()));
        }
        let body = json!({
            "model": request.model,
            "temperature": 0.0,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let value = {
            let _permit = self.inflight.acquire();
            post_json(&self.client, &self.endpoint, &self.key, &body, &self.retry).map_err(|f| match f {
                HttpFailure::Auth { status } => LlmError::Auth(format!("chat endpoint answered HTTP {status}")),
                HttpFailure::Status { status, attempts, body } => LlmError::Remote {
                    status: Some(status),
                    attempts,
                    message: format!("HTTP {status}: {}", body.chars().take(200).collect::<String>()),
                },
                HttpFailure::Transport { attempts, message } => LlmError::Remote {
                    status: None,
                    attempts,
                    message,
                },
                HttpFailure::Decode(message) => LlmError::Remote {
                    status: None,
                    attempts: 1,
                    message,
                },
            })?
        };
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Remote {
                status: None,
                attempts: 1,
                message: "response has no choices[0].message.content".into(),
            })
    }

    fn kind(&self) -> &'static str {
        "remote-chat"
    }
}
