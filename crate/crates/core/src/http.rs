//! Blocking JSON-over-HTTP client with bounded retries and an in-flight cap,
//! shared by the remote reasoner and the remote critic.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: u32,
    /// Delay before retry `i` (0-based) is `base_delay * 2^i`.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

#[derive(Debug)]
pub(crate) struct HttpFailure {
    pub status: Option<u16>,
    pub body: String,
}

/// Counting semaphore.
#[derive(Debug)]
struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().expect("in-flight lock poisoned");
        while *n >= self.max {
            n = self.freed.wait(n).expect("in-flight lock poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.current.lock().expect("in-flight lock poisoned");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub(crate) struct JsonClient {
    agent: ureq::Agent,
    bearer: Option<String>,
    retry: RetryPolicy,
    limit: InFlightLimit,
}

impl JsonClient {
    pub fn new(
        bearer: Option<String>,
        retry: RetryPolicy,
        max_in_flight: usize,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        JsonClient {
            agent,
            bearer,
            retry,
            limit: InFlightLimit::new(max_in_flight),
        }
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<Value, (HttpFailure, bool)> {
        let _permit = self.limit.acquire();
        let mut req = self.agent.post(url);
        if let Some(key) = &self.bearer {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Err((
                    HttpFailure {
                        status: None,
                        body: e.to_string(),
                    },
                    true,
                ))
            }
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| {
            (
                HttpFailure {
                    status: Some(status),
                    body: e.to_string(),
                },
                true,
            )
        })?;
        if (200..300).contains(&status) {
            serde_json::from_str(&text).map_err(|e| {
                (
                    HttpFailure {
                        status: Some(status),
                        body: format!("invalid JSON response ({e}): {text}"),
                    },
                    false,
                )
            })
        } else {
            let retryable = status == 429 || (500..600).contains(&status);
            Err((
                HttpFailure {
                    status: Some(status),
                    body: text,
                },
                retryable,
            ))
        }
    }

    /// POSTs `body`, retrying transport errors, 429 and 5xx.
    pub fn post_json(&self, url: &str, body: &Value) -> Result<Value, HttpFailure> {
        let mut retry = 0;
        loop {
            match self.attempt(url, body) {
                Ok(v) => return Ok(v),
                Err((failure, retryable)) => {
                    if !retryable || retry >= self.retry.retries {
                        return Err(failure);
                    }
                    log::warn!(
                        "request to {url} failed (status {:?}); retry {} of {}",
                        failure.status,
                        retry + 1,
                        self.retry.retries
                    );
                    std::thread::sleep(self.retry.delay(retry));
                    retry += 1;
                }
            }
        }
    }
}
