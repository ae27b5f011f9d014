//! Blocking JSON POST with bounded retries, shared by the remote providers.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

/// An API key read from the environment. Never printed.
#[derive(Clone)]
pub(crate) struct Secret(String);

impl Secret {
    pub(crate) fn new(value: String) -> Self {
        Self(value)
    }

    pub(crate) fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

/// Attempts and backoff for retryable statuses (429 and 5xx) and transport errors.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    /// 3 attempts; waits 0.5s then 1s between them, doubling from there.
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub(crate) fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; the first retry (attempt 2) waits base_delay.
        self.base_delay * 2u32.pow(attempt.saturating_sub(2))
    }
}

#[derive(Debug)]
pub(crate) enum HttpFailure {
    /// 401 or 403.
    Auth {
        status: u16,
    },
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    Transport {
        attempts: u32,
        message: String,
    },
    Decode(String),
}

/// Caps concurrent in-flight requests per provider.
pub(crate) struct InflightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct InflightPermit<'a> {
    limit: &'a InflightLimit,
}

impl InflightLimit {
    pub(crate) fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> InflightPermit<'_> {
        let mut current = self.current.lock().expect("inflight lock poisoned");
        while *current >= self.max {
            current = self.freed.wait(current).expect("inflight lock poisoned");
        }
        *current += 1;
        InflightPermit { limit: self }
    }
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        let mut current = self.limit.current.lock().expect("inflight lock poisoned");
        *current -= 1;
        self.limit.freed.notify_one();
    }
}

pub(crate) fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    key: &Secret,
    body: &Value,
    policy: &RetryPolicy,
) -> Result<Value, HttpFailure> {
    let attempts = policy.attempts.max(1);
    let mut last = None;
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(policy.delay_before(attempt));
        }
        let response = client.post(url).bearer_auth(key.expose()).json(body).send();
        match response {
            Ok(resp) => {
                let status = resp.status().as_u16();
                if status == 401 || status == 403 {
                    return Err(HttpFailure::Auth { status });
                }
                if resp.status().is_success() {
                    return resp.json::<Value>().map_err(|e| HttpFailure::Decode(e.to_string()));
                }
                let body = resp.text().unwrap_or_default();
                let failure = HttpFailure::Status {
                    status,
                    attempts: attempt,
                    body,
                };
                if status == 429 || status >= 500 {
                    tracing::warn!(status, attempt, "retryable HTTP status from {url}");
                    last = Some(failure);
                    continue;
                }
                return Err(failure);
            }
            Err(e) => {
                tracing::warn!(attempt, "transport error calling {url}: {e}");
                last = Some(HttpFailure::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                });
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_schedule_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before(2), Duration::from_millis(500));
        assert_eq!(p.delay_before(3), Duration::from_millis(1000));
        assert_eq!(p.delay_before(4), Duration::from_millis(2000));
    }

    #[test]
    fn secret_debug_is_redacted() {
        let s = Secret::new("sk-live-123".into());
        assert!(!format!("{s:?}").contains("sk-live"));
    }
}
