//! Blocking chat-completions client with bounded exponential backoff.

use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, Completion, CompletionRequest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteSpec {
    /// e.g. `https://api.openai.com/v1` or `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no auth header.
    #[serde(default = "default_key_env")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_max")]
    pub backoff_max_ms: u64,
}

fn default_key_env() -> Option<String> {
    Some("OPENAI_API_KEY".into())
}
fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    4
}
fn default_backoff() -> u64 {
    500
}
fn default_backoff_max() -> u64 {
    16_000
}

impl RemoteSpec {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteSpec {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff(),
            backoff_max_ms: default_backoff_max(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        if self.base_url.trim().is_empty() || self.model.trim().is_empty() {
            return Err(BackendError::Config("base_url and model are required".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_base_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.backoff_max_ms))
    }
}

pub struct RemoteBackend {
    spec: RemoteSpec,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl RemoteBackend {
    pub fn new(spec: RemoteSpec) -> Result<Self, BackendError> {
        spec.validate()?;
        let api_key = spec.api_key_env.as_deref().and_then(|var| std::env::var(var).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(spec.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend { spec, client, api_key })
    }

    fn send_once(&self, body: &Value) -> Result<String, BackendError> {
        let mut req = self.client.post(self.spec.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(Duration::from_secs_f64(self.spec.timeout_secs))
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: Value = serde_json::from_str(&text).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| BackendError::BadResponse(format!("no choices[0].message.content in {text}")))
    }

    /// Sends one chat request, retrying retryable failures with backoff.
    pub fn chat(&self, content: &str, temperature: f64) -> Result<String, BackendError> {
        let body = json!({
            "model": self.spec.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": temperature,
        });
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.spec.max_retries => {
                    let wait = self.spec.backoff(attempt);
                    warn!("chat request failed ({e}); retry {} in {wait:?}", attempt + 1);
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let start = Instant::now();
        let text = self.chat(&request.prompt.render(), request.temperature)?;
        debug!("{} answered in {:?}", self.spec.model, start.elapsed());
        Ok(Completion {
            text,
            latency: start.elapsed(),
        })
    }

    fn ping(&self) -> Result<(), BackendError> {
        self.chat("Reply with the single word OK.", 0.0).map(|_| ())
    }

    fn is_remote(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_is_bounded_exponential() {
        let spec = RemoteSpec::new("http://x", "m");
        assert_eq!(spec.backoff(0), Duration::from_millis(500));
        assert_eq!(spec.backoff(2), Duration::from_millis(2000));
        assert_eq!(spec.backoff(10), Duration::from_millis(16_000));
    }

    #[test]
    fn endpoint_joins_cleanly() {
        assert_eq!(
            RemoteSpec::new("http://h/v1/", "m").endpoint(),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn retry_classification() {
        assert!(BackendError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(BackendError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::Status {
            status: 400,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::BadResponse(String::new()).is_retryable());
    }
}
