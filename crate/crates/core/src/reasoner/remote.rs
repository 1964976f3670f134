use std::time::Duration;

use serde_json::{json, Value};

use super::{Reasoner, ReasonerCall, ReasonerError};
use crate::http::JsonClient;
pub use crate::http::RetryPolicy;

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "DRR_API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteChatConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl RemoteChatConfig {
    /// Reads the credential from `DRR_API_KEY`, if set.
    pub fn from_env(url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteChatConfig {
            url: url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

/// Chat-completion client: `{model, messages, temperature, top_p, max_tokens, seed?}`
/// in, `choices[0].message.content` out.
pub struct RemoteChatReasoner {
    config: RemoteChatConfig,
    client: JsonClient,
}

impl RemoteChatReasoner {
    pub fn new(config: RemoteChatConfig) -> Self {
        let client = JsonClient::new(
            config.api_key.clone(),
            config.retry.clone(),
            config.max_in_flight,
            config.timeout,
        );
        RemoteChatReasoner { config, client }
    }

    pub fn request_body(&self, call: &ReasonerCall<'_>) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": call.messages,
            "temperature": call.params.temperature,
            "top_p": call.params.top_p,
            "max_tokens": call.params.max_new_tokens,
        });
        if let Some(seed) = call.params.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl Reasoner for RemoteChatReasoner {
    fn generate(&self, call: &ReasonerCall<'_>) -> Result<String, ReasonerError> {
        if call.messages.is_empty() {
            return Err(ReasonerError::EmptyMessages);
        }
        let body = self.request_body(call);
        let resp = self
            .client
            .post_json(&self.config.url, &body)
            .map_err(|f| ReasonerError::Remote {
                status: f.status,
                body: f.body,
            })?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ReasonerError::Remote {
                status: Some(200),
                body: format!("response lacks choices[0].message.content: {resp}"),
            })
    }
}
