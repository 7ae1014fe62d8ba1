//! LLM access for the three pipeline tasks: a backend trait (live HTTP or
//! deterministic mock), a persistent response cache, and JSON reply parsing
//! with one format re-prompt.

mod cache;
mod http;
pub mod mock;
mod parse;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, ResponseCache};
pub use http::{HttpBackend, RetryPolicy, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};
pub use mock::MockBackend;
pub use parse::{first_json_object, parse_json_payload, Payload};

use crate::error::{Error, Result};
use crate::prompts::FORMAT_REMINDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Summarize,
    Decompose,
    Entail,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Summarize => "summarize",
            Task::Decompose => "decompose",
            Task::Entail => "entail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub task: Task,
    pub prompt: String,
    pub model_id: String,
    pub temperature: f64,
}

impl LlmRequest {
    pub fn new(task: Task, prompt: impl Into<String>, model_id: impl Into<String>, temperature: f64) -> Result<Self> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(Error::Input("prompt is empty".into()));
        }
        if !(0.0..=2.0).contains(&temperature) {
            return Err(Error::Config(format!("temperature {temperature} outside [0, 2]")));
        }
        Ok(Self {
            task,
            prompt,
            model_id: model_id.into(),
            temperature,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmResponse {
    pub raw_text: String,
    pub parsed: Payload,
    pub from_cache: bool,
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Returns the raw reply text for `req`.
    fn send(&self, req: &LlmRequest) -> Result<String>;
}

/// Counting semaphore bounding in-flight backend calls.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().unwrap();
            while *free == 0 {
                free = self.cv.wait(free).unwrap();
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
        out
    }
}

pub const DEFAULT_CONCURRENCY: usize = 4;

pub struct LlmClient {
    backend: Box<dyn LlmBackend>,
    cache: Option<ResponseCache>,
    model_id: String,
    temperature: f64,
    limiter: Limiter,
    backend_calls: AtomicUsize,
}

impl LlmClient {
    pub fn new(backend: Box<dyn LlmBackend>, model_id: impl Into<String>) -> Self {
        Self {
            backend,
            cache: None,
            model_id: model_id.into(),
            temperature: 0.0,
            limiter: Limiter::new(DEFAULT_CONCURRENCY),
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(Error::Config(format!("temperature {temperature} outside [0, 2]")));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Number of requests that reached the backend (cache misses).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, task: Task, prompt: &str) -> Result<LlmResponse> {
        let req = LlmRequest::new(task, prompt, self.model_id.clone(), self.temperature)?;
        self.complete_request(&req)
    }

    /// Cache first, then the backend. A reply that fails JSON or schema
    /// validation triggers a single re-prompt with a format reminder.
    pub fn complete_request(&self, req: &LlmRequest) -> Result<LlmResponse> {
        let (raw, from_cache) = self.fetch(req)?;
        match parse_json_payload(&raw, req.task) {
            Ok(parsed) => Ok(LlmResponse {
                raw_text: raw,
                parsed,
                from_cache,
            }),
            Err(first @ (Error::Parse(_) | Error::Schema(_))) => {
                log::warn!("malformed {} reply ({first}); re-prompting once", req.task.as_str());
                let retry = LlmRequest {
                    prompt: format!("{}{FORMAT_REMINDER}", req.prompt),
                    ..req.clone()
                };
                let (raw, from_cache) = self.fetch(&retry)?;
                let parsed = parse_json_payload(&raw, req.task)?;
                Ok(LlmResponse {
                    raw_text: raw,
                    parsed,
                    from_cache,
                })
            }
            Err(e) => Err(e),
        }
    }

    fn fetch(&self, req: &LlmRequest) -> Result<(String, bool)> {
        let key = CacheKey::for_request(req);
        if let Some(cache) = &self.cache {
            if let Some(raw) = cache.get(&key)? {
                return Ok((raw, true));
            }
        }
        let raw = self.limiter.run(|| {
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            self.backend.send(req)
        })?;
        if let Some(cache) = &self.cache {
            cache.put(&key, &raw)?;
        }
        Ok((raw, false))
    }
}
