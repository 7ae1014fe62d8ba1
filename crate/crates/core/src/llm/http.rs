//! Chat-completions HTTP backend with bounded exponential-backoff retries.

use std::time::Duration;

use serde_json::{json, Value};

use super::{LlmBackend, LlmRequest};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "FACTFORGE_API_KEY";
pub const API_BASE_ENV: &str = "FACTFORGE_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(Error),
}

pub struct HttpBackend {
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        let api_key = api_key
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| Error::Config(format!("missing API credential (set {API_KEY_ENV})")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            retry: RetryPolicy::default(),
            client,
        })
    }

    pub fn from_env() -> Result<Self> {
        let base = std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        Self::new(base, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn attempt(&self, req: &LlmRequest) -> Attempt {
        let body = json!({
            "model": req.model_id,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        let resp = match self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match status {
            200..=299 => match extract_content(&text) {
                Some(content) => Attempt::Done(content),
                None => Attempt::Fail(Error::Backend {
                    status,
                    body: format!("no message content in reply: {text}"),
                }),
            },
            401 | 403 => Attempt::Fail(Error::Config(format!("credential rejected (HTTP {status})"))),
            408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {text}")),
            _ => Attempt::Fail(Error::Backend { status, body: text }),
        }
    }
}

fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")?.as_str().map(str::to_string)
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> &str {
        "live"
    }

    fn send(&self, req: &LlmRequest) -> Result<String> {
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match self.attempt(req) {
                Attempt::Done(content) => return Ok(content),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(why) => {
                    log::warn!("transient LLM failure (attempt {attempt}): {why}");
                    last = why;
                    if attempt < self.retry.max_attempts {
                        std::thread::sleep(self.retry.delay(attempt));
                    }
                }
            }
        }
        Err(Error::Transient {
            attempts: self.retry.max_attempts,
            last,
        })
    }
}
