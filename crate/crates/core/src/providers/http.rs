//! Chat-completion HTTP backend.
//!
//! POSTs `{model, messages, temperature, max_tokens}` to
//! `<base_url>/v1/chat/completions` and reads `choices[0].message.content`
//! plus the optional `usage` block. Transport failures, HTTP 429 and 5xx
//! responses are retried with exponential backoff; other 4xx responses fail
//! at once.

use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use ureq::Agent;

use super::{Backend, Completion, ModelRequest, ProviderError};

pub const API_KEY_ENV: &str = "STREAMVR_API_KEY";
pub const BASE_URL_ENV: &str = "STREAMVR_BASE_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
            multiplier: 2,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff * self.multiplier.saturating_pow(retry.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub seed: Option<u64>,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            seed: None,
        }
    }

    /// Fills the API key from `STREAMVR_API_KEY` when it is not set already.
    pub fn with_env_key(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

pub struct HttpBackend {
    name: String,
    config: HttpConfig,
    agent: Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("name", &self.name)
            .field("endpoint", &self.config.endpoint())
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

enum AttemptError {
    Retryable(String),
    Fatal(ProviderError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            name: format!("http:{}#{}", config.base_url, config.model),
            config,
            agent,
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn body(&self, request: &ModelRequest) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(context) = &request.context {
            messages.push(json!({"role": "system", "content": context}));
        }
        messages.push(json!({"role": "user", "content": request.prompt}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<Completion, AttemptError> {
        let mut req = self.agent.post(self.config.endpoint());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(body)
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(AttemptError::Retryable(format!("HTTP {status}")));
        }
        if status >= 400 {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Err(AttemptError::Fatal(ProviderError::Network {
                attempts: 1,
                message: format!("HTTP {status}: {}", detail.trim()),
            }));
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| AttemptError::Fatal(ProviderError::MalformedResponse(e.to_string())))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                AttemptError::Fatal(ProviderError::MalformedResponse(
                    "missing choices[0].message.content".into(),
                ))
            })?;
        let usage = parsed.usage.unwrap_or(Usage {
            prompt_tokens: None,
            completion_tokens: None,
        });
        Ok(Completion {
            text,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            latency_ms: None,
        })
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderError> {
        let body = self.body(request);
        let attempts = self.config.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                thread::sleep(self.config.retry.backoff(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(c) => return Ok(c),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(msg)) => last = msg,
            }
        }
        Err(ProviderError::Network {
            attempts,
            message: last,
        })
    }
}
