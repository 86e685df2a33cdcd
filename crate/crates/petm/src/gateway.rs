//! Completion providers over HTTP plus the retrying, caching, logging gateway
//! every caller goes through.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use petm_core::llm::{check_prompt, prompt_digest, CompletionProvider, GatewayError, GenerationParams, ProviderKind};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::http::{agent, backoff, retry_after_ms};

pub const API_KEY_ENV: &str = "PETM_LLM_API_KEY";

/// Chat-completions or plain-completions endpoint.
#[derive(Clone, Debug)]
pub struct HttpProvider {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpProvider {
    pub fn new(kind: ProviderKind, endpoint: impl Into<String>) -> Self {
        HttpProvider { kind, endpoint: endpoint.into(), api_key: std::env::var(API_KEY_ENV).ok(), timeout: Duration::from_secs(120) }
    }

    fn body(&self, prompt: &str, params: &GenerationParams) -> Value {
        let mut body = match self.kind {
            ProviderKind::Completion => json!({ "model": params.model, "prompt": prompt }),
            _ => json!({ "model": params.model, "messages": [{ "role": "user", "content": prompt }] }),
        };
        body["temperature"] = json!(params.temperature);
        body["stop"] = json!(params.stop);
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }

    fn extract(&self, v: &Value) -> Option<String> {
        let choice = v.get("choices")?.get(0)?;
        let text = match self.kind {
            ProviderKind::Completion => choice.get("text")?,
            _ => choice.get("message")?.get("content")?,
        };
        text.as_str().map(String::from)
    }
}

fn looks_like_overflow(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("context_length") || b.contains("context length") || b.contains("maximum context") || b.contains("too many tokens")
}

impl CompletionProvider for HttpProvider {
    fn name(&self) -> String {
        let kind = if self.kind == ProviderKind::Completion { "completion" } else { "chat" };
        format!("{kind}:{}", self.endpoint)
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, GatewayError> {
        check_prompt(prompt, params)?;
        let mut req = agent(self.timeout).post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.body(prompt, params))
            .map_err(|e| GatewayError::ProviderUnavailable { message: e.to_string(), retry_after_ms: None })?;
        let status = resp.status().as_u16();
        let hint = retry_after_ms(&resp);
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => {
                let v: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Protocol(e.to_string()))?;
                self.extract(&v).ok_or_else(|| GatewayError::Protocol(format!("no completion text in {text}")))
            }
            429 => Err(GatewayError::RateLimited { retry_after_ms: hint }),
            413 => Err(GatewayError::ContextOverflow(text)),
            400..=499 if looks_like_overflow(&text) => Err(GatewayError::ContextOverflow(text)),
            500..=599 => Err(GatewayError::ProviderUnavailable { message: format!("HTTP {status}"), retry_after_ms: hint }),
            _ => Err(GatewayError::Protocol(format!("HTTP {status}: {text}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    digest: String,
    response: String,
}

/// Responses keyed by prompt digest, provider, model and parameters,
/// persisted as JSONL.
pub struct ResponseCache {
    entries: RwLock<HashMap<String, String>>,
    file: Mutex<File>,
}

impl ResponseCache {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut entries = HashMap::new();
        if let Ok(f) = File::open(path) {
            for line in BufReader::new(f).lines() {
                // A torn last line from an interrupted run is skipped.
                if let Ok(l) = serde_json::from_str::<CacheLine>(&line?) {
                    entries.insert(l.key, l.response);
                }
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResponseCache { entries: RwLock::new(entries), file: Mutex::new(file) })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn put(&self, key: String, digest: &str, response: &str) -> std::io::Result<()> {
        let line = serde_json::to_string(&CacheLine { key: key.clone(), digest: digest.into(), response: response.into() })?;
        {
            let mut f = self.file.lock().unwrap();
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        self.entries.write().unwrap().insert(key, response.into());
        Ok(())
    }
}

/// One JSON line per gateway call.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogEntry {
    pub digest: String,
    pub provider: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    pub status: String,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub elapsed_ms: u64,
}

pub struct RequestLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl RequestLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RequestLog { path: path.to_path_buf(), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&self, entry: &LogEntry) {
        let line = serde_json::to_string(entry).expect("log entries serialize");
        let mut f = self.file.lock().unwrap();
        // Logging must never fail a request.
        let _ = writeln!(f, "{line}").and_then(|_| f.flush());
    }
}

/// Counting semaphore bounding concurrent provider calls.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 3, backoff_ms: 1000 }
    }
}

/// What the call is for, recorded in the request log.
#[derive(Clone, Debug, Default)]
pub struct RequestContext {
    pub task: Option<String>,
    pub item_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub digest: String,
    pub raw: String,
    pub cached: bool,
    pub attempts: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{error} (after {attempts} attempt(s))")]
pub struct GatewayFailure {
    pub digest: String,
    pub error: GatewayError,
    pub attempts: u32,
}

pub struct Gateway {
    provider: Box<dyn CompletionProvider + Send + Sync>,
    pub params: GenerationParams,
    pub retry: RetryPolicy,
    cache: Option<ResponseCache>,
    log: Option<RequestLog>,
    limiter: Limiter,
    provider_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(provider: Box<dyn CompletionProvider + Send + Sync>, params: GenerationParams) -> Self {
        Gateway {
            provider,
            params,
            retry: RetryPolicy::default(),
            cache: None,
            log: None,
            limiter: Limiter { free: Mutex::new(4), cv: Condvar::new() },
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_log(mut self, log: RequestLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Limiter { free: Mutex::new(n.max(1)), cv: Condvar::new() };
        self
    }


    pub fn provider_name(&self) -> String {
        self.provider.name()
    }

    /// Number of requests that reached the provider (cache hits excluded).
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    pub fn cache_key(&self, digest: &str) -> String {
        let p = &self.params;
        prompt_digest(&format!(
            "{digest}\n{}\n{}\n{:?}\n{}\n{:?}\n{:?}",
            self.provider.name(),
            p.model,
            p.provider,
            p.temperature,
            p.max_tokens,
            p.stop
        ))
    }

    pub fn complete(&self, prompt: &str, ctx: &RequestContext) -> Result<Completion, GatewayFailure> {
        let started = Instant::now();
        let digest = prompt_digest(prompt);
        let key = self.cache_key(&digest);
        let mut entry = LogEntry {
            digest: digest.clone(),
            provider: self.provider.name(),
            model: self.params.model.clone(),
            task: ctx.task.clone(),
            item_id: ctx.item_id.clone(),
            status: String::new(),
            attempts: 0,
            response: None,
            error: None,
            elapsed_ms: 0,
        };
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            entry.status = "cached".into();
            entry.response = Some(hit.clone());
            self.write_log(entry, started);
            return Ok(Completion { digest, raw: hit, cached: true, attempts: 0 });
        }

        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            let outcome = {
                let _slot = self.limiter.acquire();
                self.provider_calls.fetch_add(1, Ordering::SeqCst);
                self.provider.complete(prompt, &self.params)
            };
            match outcome {
                Err(e) if e.is_transient() && attempts <= self.retry.retries => {
                    std::thread::sleep(backoff(self.retry.backoff_ms, attempts, e.retry_after_ms()));
                }
                other => break other,
            }
        };
        entry.attempts = attempts;
        match result {
            Ok(raw) => {
                if let Some(cache) = &self.cache {
                    // A cache write failure costs a repeat call on the next run only.
                    let _ = cache.put(key, &digest, &raw);
                }
                entry.status = "ok".into();
                entry.response = Some(raw.clone());
                self.write_log(entry, started);
                Ok(Completion { digest, raw, cached: false, attempts })
            }
            Err(error) => {
                entry.status = "error".into();
                entry.error = Some(error.to_string());
                self.write_log(entry, started);
                Err(GatewayFailure { digest, error, attempts })
            }
        }
    }

    fn write_log(&self, mut entry: LogEntry, started: Instant) {
        if let Some(log) = &self.log {
            entry.elapsed_ms = started.elapsed().as_millis() as u64;
            log.write(&entry);
        }
    }
}
