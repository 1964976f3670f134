use std::time::Duration;

use serde_json::{json, Value};

use super::{check_input, Critic, CriticError, CriticScore, DEFAULT_THRESHOLD};
use crate::http::{JsonClient, RetryPolicy};
use crate::scalar::Scalar;
use crate::verdict::Verdict;

#[derive(Debug, Clone)]
pub struct RemoteCriticConfig {
    /// Service base URL; requests go to `<base>/assess`.
    pub url: String,
    pub threshold: f64,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl RemoteCriticConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteCriticConfig {
            url: url.into(),
            threshold: DEFAULT_THRESHOLD,
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            timeout: Duration::from_secs(60),
        }
    }
}

/// Client for a critic served over HTTP: `POST /assess {"input"}` answers
/// `{"p_accept", "verdict", "model_version"}`.
pub struct RemoteCritic {
    endpoint: String,
    threshold: f64,
    client: JsonClient,
}

impl RemoteCritic {
    pub fn new(config: RemoteCriticConfig) -> Self {
        let base = config.url.trim_end_matches('/');
        let endpoint = if base.ends_with("/assess") {
            base.to_string()
        } else {
            format!("{base}/assess")
        };
        RemoteCritic {
            endpoint,
            threshold: config.threshold,
            client: JsonClient::new(None, config.retry, config.max_in_flight, config.timeout),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl<F: Scalar> Critic<F> for RemoteCritic {
    fn assess(&self, input_text: &str) -> Result<CriticScore<F>, CriticError> {
        check_input(input_text)?;
        let resp = self
            .client
            .post_json(&self.endpoint, &json!({ "input": input_text }))
            .map_err(|f| CriticError::Remote {
                status: f.status,
                body: f.body,
            })?;
        let bad = |what: &str| CriticError::Remote {
            status: Some(200),
            body: format!("{what} in response {resp}"),
        };
        let p = resp
            .get("p_accept")
            .and_then(Value::as_f64)
            .filter(|p| (0.0..=1.0).contains(p))
            .ok_or_else(|| bad("missing or out-of-range p_accept"))?;
        let verdict = match resp.get("verdict").and_then(Value::as_str) {
            Some("accept") => Verdict::Accept,
            Some("reject") => Verdict::Reject,
            _ => return Err(bad("missing verdict")),
        };
        let score = CriticScore {
            p_accept: F::lit(p),
            verdict,
            threshold: F::lit(self.threshold),
        };
        if !score.is_coherent() {
            return Err(bad(&format!(
                "verdict {verdict:?} incoherent with threshold {}",
                self.threshold
            )));
        }
        Ok(score)
    }
}
