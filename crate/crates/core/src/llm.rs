//! Completion backend abstraction with retries, bounded concurrency, a
//! request ceiling and a content-addressed response cache.
//!
//! Two backends ship: [`RemoteBackend`] speaks a minimal chat-completion
//! wire contract, and [`StubBackend`] answers from registered fixtures so the
//! whole pipeline can run hermetically.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::sha256_hex;

pub const ENV_ENDPOINT: &str = "KG2FT_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "KG2FT_LLM_API_KEY";
pub const ENV_MODEL: &str = "KG2FT_LLM_MODEL";

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable { attempts: usize, last: String },
    #[error("request budget of {limit} backend calls exhausted")]
    BudgetExceeded { limit: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying (timeouts, rate limits, 5xx).
    Transient(String),
    /// Retrying cannot help (disabled backend, 4xx, malformed response).
    Permanent(String),
}

impl std::fmt::Display for BackendError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendError::Transient(m) => write!(f, "transient: {m}"),
            BackendError::Permanent(m) => write!(f, "permanent: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub system_text: String,
    pub user_text: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

impl PromptRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
            max_output_tokens: 512,
            temperature: 0.0,
        }
    }

    pub fn with_max_output_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }
}

pub trait CompletionBackend: Send + Sync {
    /// Identifies the backend configuration in cache keys.
    fn id(&self) -> String;
    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError>;
}

/// Cache key: SHA-256 over the backend id and every prompt field.
pub fn cache_key(backend_id: &str, request: &PromptRequest) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        backend: &'a str,
        system: &'a str,
        user: &'a str,
        max_output_tokens: u32,
        temperature: f32,
    }
    let material = serde_json::to_vec(&KeyMaterial {
        backend: backend_id,
        system: &request.system_text,
        user: &request.user_text,
        max_output_tokens: request.max_output_tokens,
        temperature: request.temperature,
    })
    .expect("key material serializes");
    sha256_hex(material)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub backend: String,
    pub request: PromptRequest,
    pub response_text: String,
    pub created_at: u64,
}

/// Directory of immutable entries at `<dir>/<key[..2]>/<key>`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(key)
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let bytes = std::fs::read(self.path_for(key)).ok()?;
        serde_json::from_slice::<CacheEntry>(&bytes)
            .ok()
            .filter(|e| e.key == key)
    }

    /// Writes through a temporary file and renames it into place.
    pub fn put(&self, entry: &CacheEntry) -> std::io::Result<()> {
        let path = self.path_for(&entry.key);
        let parent = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(parent)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        serde_json::to_writer_pretty(&mut tmp, entry)?;
        tmp.write_all(b"\n")?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: f64,
    pub max_attempts: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            max_attempts: 5,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` starts at 1.
    pub fn delay_after(&self, attempt: usize) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(attempt as i32 - 1))
    }
}

struct Limiter {
    max: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.in_use.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub cache_key: String,
    pub cached: bool,
}

/// Shared client used by every pipeline worker.
pub struct LlmClient {
    backend: Arc<dyn CompletionBackend>,
    cache: Option<ResponseCache>,
    memory: Mutex<HashMap<String, String>>,
    retry: RetryPolicy,
    max_calls: Option<usize>,
    calls: AtomicUsize,
    limiter: Limiter,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            cache: None,
            memory: Mutex::new(HashMap::new()),
            retry: RetryPolicy::default(),
            max_calls: None,
            calls: AtomicUsize::new(0),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_calls(mut self, max_calls: Option<usize>) -> Self {
        self.max_calls = max_calls;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    /// Backend calls issued so far (every attempt counts).
    pub fn backend_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &PromptRequest) -> Result<Completion, LlmError> {
        if request.user_text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("user_text is empty".into()));
        }
        let key = cache_key(&self.backend.id(), request);
        if let Some(text) = self.memory.lock().unwrap().get(&key) {
            return Ok(Completion {
                text: text.clone(),
                cache_key: key,
                cached: true,
            });
        }
        if let Some(entry) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            self.memory
                .lock()
                .unwrap()
                .insert(key.clone(), entry.response_text.clone());
            return Ok(Completion {
                text: entry.response_text,
                cache_key: key,
                cached: true,
            });
        }

        let mut last = String::new();
        let mut attempts = 0;
        while attempts < self.retry.max_attempts {
            if attempts > 0 {
                std::thread::sleep(self.retry.delay_after(attempts));
            }
            self.reserve_call()?;
            attempts += 1;
            let result = {
                let _slot = self.limiter.acquire();
                self.backend.complete(request)
            };
            match result {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        cache.put(&CacheEntry {
                            key: key.clone(),
                            backend: self.backend.id(),
                            request: request.clone(),
                            response_text: text.clone(),
                            created_at: SystemTime::now()
                                .duration_since(UNIX_EPOCH)
                                .map(|d| d.as_secs())
                                .unwrap_or(0),
                        })?;
                    }
                    self.memory.lock().unwrap().insert(key.clone(), text.clone());
                    return Ok(Completion {
                        text,
                        cache_key: key,
                        cached: false,
                    });
                }
                Err(BackendError::Transient(m)) => {
                    tracing::debug!(attempt = attempts, error = %m, "backend call failed");
                    last = m;
                }
                Err(BackendError::Permanent(m)) => {
                    last = m;
                    break;
                }
            }
        }
        Err(LlmError::BackendUnavailable { attempts, last })
    }

    fn reserve_call(&self) -> Result<(), LlmError> {
        let Some(limit) = self.max_calls else {
            self.calls.fetch_add(1, Ordering::SeqCst);
            return Ok(());
        };
        self.calls
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < limit).then_some(n + 1))
            .map(|_| ())
            .map_err(|_| LlmError::BudgetExceeded { limit })
    }
}

/// A `(prompt substring, response)` pair for the stub backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubFixture {
    #[serde(rename = "match")]
    pub pattern: String,
    pub response: String,
}

/// Deterministic offline backend.
///
/// A request is answered with the response of the first registered fixture
/// whose pattern occurs in the request's user text. Unmatched requests are
/// echoed: the response is the user text with surrounding whitespace
/// trimmed. A disabled stub fails every call permanently.
pub struct StubBackend {
    fixtures: RwLock<Vec<StubFixture>>,
    enabled: bool,
    delay: Option<Duration>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl StubBackend {
    pub fn new() -> Self {
        Self {
            fixtures: RwLock::new(Vec::new()),
            enabled: true,
            delay: None,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::new()
        }
    }

    /// Sleeps inside every call; used to observe concurrency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn register(&self, pattern: impl Into<String>, response: impl Into<String>) {
        self.fixtures.write().unwrap().push(StubFixture {
            pattern: pattern.into(),
            response: response.into(),
        });
    }

    pub fn register_stub_fixtures<I>(&self, fixtures: I)
    where
        I: IntoIterator<Item = StubFixture>,
    {
        self.fixtures.write().unwrap().extend(fixtures);
    }

    pub fn load_fixtures(&self, path: &Path) -> std::io::Result<()> {
        let text = std::fs::read_to_string(path)?;
        let fixtures: Vec<StubFixture> = serde_json::from_str(&text)?;
        self.register_stub_fixtures(fixtures);
        Ok(())
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn answer(&self, user_text: &str) -> String {
        self.fixtures
            .read()
            .unwrap()
            .iter()
            .find(|f| user_text.contains(&f.pattern))
            .map(|f| f.response.clone())
            .unwrap_or_else(|| user_text.trim().to_string())
    }
}

impl CompletionBackend for StubBackend {
    fn id(&self) -> String {
        if !self.enabled {
            return "stub:disabled".into();
        }
        let fixtures = self.fixtures.read().unwrap();
        let bytes = serde_json::to_vec(&*fixtures).expect("fixtures serialize");
        format!("stub:{}", &sha256_hex(bytes)[..16])
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.enabled {
            return Err(BackendError::Permanent("stub backend disabled".into()));
        }
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        let out = self.answer(&request.user_text);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        Ok(out)
    }
}

/// Chat-completion client over HTTP.
///
/// Sends `{"model", "messages": [system, user], "max_tokens", "temperature"}`
/// to the endpoint with a bearer token and reads
/// `choices[0].message.content` from the response.
pub struct RemoteBackend {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            model: model.into(),
            agent,
        }
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint =
            std::env::var(ENV_ENDPOINT).map_err(|_| LlmError::InvalidRequest(format!("{ENV_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into());
        Ok(Self::new(endpoint, std::env::var(ENV_API_KEY).ok(), model))
    }

    pub fn request_body(&self, request: &PromptRequest) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        })
    }
}

impl CompletionBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}#{}", self.endpoint, self.model)
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        let body = self.request_body(request).to_string();
        let mut call = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send(body.as_str())
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => return Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => return Err(BackendError::Permanent(format!("HTTP {status}: {text}"))),
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Permanent(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Permanent("response has no choices[0].message.content".into()))
    }
}
