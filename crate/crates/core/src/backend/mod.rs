//! Chat-completion backends.
//!
//! Everything that talks to a model goes through [`ChatBackend`]. The HTTP
//! client speaks the common chat-completions wire format; the mocks in
//! [`mock`] stand in for it in tests and offline runs, and [`CachedBackend`]
//! makes reruns free.

mod cache;
mod http;
pub mod mock;
pub mod prompt;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, CachedBackend};
pub use http::{HttpBackend, HttpReply, Transport, UreqTransport};
pub use mock::MockSpec;
pub use prompt::{render, PromptCatalog, PromptError, PromptTemplate};

pub const DEFAULT_API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("fixture missing: {0}")]
    FixtureMissing(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// One call to a backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    /// Catalog id of the template that produced the final message.
    pub template_id: String,
    pub messages: Vec<ChatMessage>,
    /// The part of the prompt the model is asked to transform or answer.
    /// Sent to the model only as part of `messages`; mocks read it directly.
    pub payload: Option<String>,
    /// Overrides the backend's configured temperature.
    pub temperature: Option<f64>,
}

impl ChatRequest {
    pub fn new(template_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            template_id: template_id.into(),
            messages,
            payload: None,
            temperature: None,
        }
    }

    pub fn with_payload(mut self, payload: impl Into<String>) -> Self {
        self.payload = Some(payload.into());
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = Some(t);
        self
    }

    /// The payload, or the last user message when none was attached.
    pub fn payload_or_last_user(&self) -> &str {
        if let Some(p) = &self.payload {
            return p;
        }
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::BadResponse("request has no messages".into()));
        }
        if let Some(m) = self
            .messages
            .iter()
            .find(|m| m.role != Role::System && m.content.is_empty())
        {
            return Err(BackendError::BadResponse(format!(
                "empty {:?} message",
                m.role
            )));
        }
        Ok(())
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;

    /// Like [`complete`](Self::complete) but never served from a cache.
    fn complete_fresh(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.complete(request)
    }

    fn model_id(&self) -> &str;

    fn default_temperature(&self) -> f64;

    /// How many calls a caller may keep in flight at once.
    fn max_in_flight(&self) -> usize {
        1
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
    fn complete_fresh(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete_fresh(request)
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn default_temperature(&self) -> f64 {
        (**self).default_temperature()
    }
    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
    fn complete_fresh(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete_fresh(request)
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn default_temperature(&self) -> f64 {
        (**self).default_temperature()
    }
    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

/// Backend settings as stored in a JSON config file. The API key itself is
/// never part of the config, only the name of the variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub name: String,
    pub endpoint_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub cache_dir: Option<PathBuf>,
    pub mock: Option<MockSpec>,
}

pub const MAX_RETRIES_LIMIT: u32 = 10;

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            name: "default".into(),
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-2024-08-06".into(),
            temperature: 0.0,
            max_retries: 3,
            timeout_secs: 600,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            max_in_flight: 4,
            backoff_base_ms: 1_000,
            backoff_cap_ms: 60_000,
            cache_dir: None,
            mock: None,
        }
    }
}

impl BackendConfig {
    pub fn mock(name: impl Into<String>, spec: MockSpec) -> Self {
        BackendConfig {
            name: name.into(),
            model: "mock".into(),
            mock: Some(spec),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(BackendError::Config(format!(
                "max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.max_retries
            )));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be >= 1".into()));
        }
        if self.mock.is_none() && self.endpoint_url.is_empty() {
            return Err(BackendError::Config("endpoint_url is empty".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let cfg: BackendConfig = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Builds the backend described by `config`. Relative fixture and cache
/// paths resolve against `base_dir`.
pub fn build_backend(
    config: &BackendConfig,
    base_dir: &Path,
) -> Result<Box<dyn ChatBackend>, BackendError> {
    config.validate()?;
    let inner: Box<dyn ChatBackend> = match &config.mock {
        Some(spec) => mock::build(spec, config, base_dir)?,
        None => Box::new(HttpBackend::from_config(config.clone())?),
    };
    Ok(match &config.cache_dir {
        Some(dir) => Box::new(CachedBackend::new(inner, base_dir.join(dir))?),
        None => inner,
    })
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Counts calls that reach the wrapped backend.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B: ChatBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for CountingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
    fn complete_fresh(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete_fresh(request)
    }
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn default_temperature(&self) -> f64 {
        self.inner.default_temperature()
    }
    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}

/// Counting semaphore bounding concurrent requests.
pub(crate) struct InFlight {
    free: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct Permit<'a>(&'a InFlight);

impl InFlight {
    pub(crate) fn new(n: usize) -> Self {
        InFlight {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

/// Removes a surrounding Markdown code fence, which models often add.
pub fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return text;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return text;
    };
    match body.find('\n') {
        Some(nl) if !body[..nl].contains('<') && !body[..nl].contains('{') => &body[nl + 1..],
        _ => body,
    }
    .trim_matches('\n')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::default();
        assert!(c.validate().is_ok());
        c.temperature = 2.5;
        assert!(matches!(c.validate(), Err(BackendError::Config(_))));
        c.temperature = 1.0;
        c.max_retries = 99;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let c: BackendConfig =
            serde_json::from_str(r#"{"name":"m","mock":{"kind":"identity"}}"#).unwrap();
        assert_eq!(c.api_key_env, DEFAULT_API_KEY_ENV);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn empty_user_message_rejected() {
        let r = ChatRequest::new("t", vec![ChatMessage::user("")]);
        assert!(r.validate().is_err());
        let r = ChatRequest::new("t", vec![]);
        assert!(r.validate().is_err());
    }

    #[test]
    fn code_fences_are_stripped() {
        assert_eq!(strip_code_fence("```xml\n<p>a</p>\n```"), "<p>a</p>");
        assert_eq!(strip_code_fence("```\n{\"1\":\"A\"}\n```"), "{\"1\":\"A\"}");
        assert_eq!(strip_code_fence("<p>a</p>"), "<p>a</p>");
    }
}
