//! Chat-completion HTTP client with retries.
//!
//! Speaks the common chat-completion JSON shape: POST a `messages` array
//! with `temperature` and `max_tokens`, read `choices[0].message.content`.
//! Local open-weight servers speaking the same protocol plug in unchanged.

use std::time::Duration;

use serde::Deserialize;

use crate::error::GatewayError;

use super::{ChatClient, ChatOutcome, GenConfig, TemplateId};

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

/// Live endpoint client. Retries transport failures and 5xx responses with
/// exponential backoff, up to `max_attempts` tries in total.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_attempts: u32,
    backoff_base: Duration,
    client: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            max_attempts: 3,
            backoff_base: Duration::from_millis(200),
            client,
        })
    }

    pub fn with_retry(mut self, max_attempts: u32, backoff_base: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff_base = backoff_base;
        self
    }

    fn try_once(&self, prompt: &str, gen: &GenConfig) -> Result<ChatOutcome, TryError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": gen.temperature,
            "max_tokens": gen.max_tokens,
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TryError::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(TryError::Retryable(format!("server error {status}")));
        }
        if !status.is_success() {
            return Err(TryError::Fatal(format!("endpoint returned {status}")));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| TryError::Fatal(format!("bad response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| TryError::Fatal("response has no choices".into()))?;
        Ok(ChatOutcome {
            text: choice.message.content,
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }
}

enum TryError {
    Retryable(String),
    Fatal(String),
}

impl ChatClient for HttpChatClient {
    fn complete(
        &self,
        _template: TemplateId,
        prompt: &str,
        gen: &GenConfig,
    ) -> Result<ChatOutcome, GatewayError> {
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            match self.try_once(prompt, gen) {
                Ok(outcome) => return Ok(outcome),
                Err(TryError::Fatal(message)) => {
                    return Err(GatewayError::BadResponse(message));
                }
                Err(TryError::Retryable(message)) => {
                    tracing::warn!(attempt = attempt + 1, %message, "chat call failed, retrying");
                    last = message;
                }
            }
        }
        Err(GatewayError::Transport {
            attempts: self.max_attempts,
            message: last,
        })
    }
}
