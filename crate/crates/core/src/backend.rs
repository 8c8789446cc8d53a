//! Uniform completion interface over a live HTTP chat-completion service, a
//! deterministic replay store, and a scripted oracle, with content-addressed
//! caching.
//!
//! Every completion request is identified by a key derived from the canonical
//! request content (model, decode parameters, prompt text), so a cache entry
//! fully determines the response: once an exchange exists, [`CompletionClient::complete`]
//! is a pure function of its inputs. The cache is an append-only JSON-lines
//! file, one exchange per line, loadable as a replay store.
//!
//! Concurrency: the client may be called from many threads. Cache writes are
//! serialized, and concurrent misses on the same key are coalesced so at most
//! one live network call per key is ever in flight.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which transport serves completions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// POST to a chat-completions endpoint, caching every exchange.
    HttpChat,
    /// Serve exclusively from a preloaded cache; a miss is an error.
    #[default]
    Replay,
    /// Call an in-process closure; deterministic and network-free.
    Scripted,
}

/// Backend configuration. Replay and scripted backends ignore the network
/// fields (model and decode parameters still participate in cache keys).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub backend_kind: BackendKind,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub base_url: String,
    pub timeout_secs: u64,
    pub retries: u32,
    /// JSON-lines cache file; `None` keeps the cache in memory only.
    pub cache_path: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            backend_kind: BackendKind::Replay,
            model_name: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            max_tokens: 16,
            base_url: "https://api.openai.com/v1/chat/completions".to_string(),
            timeout_secs: 30,
            retries: 2,
            cache_path: None,
        }
    }
}

impl BackendConfig {
    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

/// One immutable prompt/response exchange. The cache key is derived from the
/// content fields, never stored, so an entry can't drift from its key.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChatExchange {
    pub prompt_text: String,
    pub response_text: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub truncated: bool,
    /// Seconds since the Unix epoch at record time.
    #[serde(default)]
    pub timestamp: u64,
}

impl ChatExchange {
    pub fn key(&self) -> String {
        cache_key(&self.model_name, self.temperature, self.max_tokens, &self.prompt_text)
    }
}

/// Content-addressed key for a completion request: hex SHA-256 of the
/// canonical JSON encoding of {max_tokens, model, prompt, temperature}
/// (keys sorted).
pub fn cache_key(model: &str, temperature: f64, max_tokens: u32, prompt: &str) -> String {
    let canonical = serde_json::json!({
        "max_tokens": max_tokens,
        "model": model,
        "prompt": prompt,
        "temperature": temperature,
    });
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(digest.len() * 2);
    for byte in digest {
        use std::fmt::Write as _;
        write!(hex, "{byte:02x}").expect("writing to String cannot fail");
    }
    hex
}

/// Append-only store of [`ChatExchange`]s, indexed by cache key, optionally
/// persisted to a JSON-lines file.
pub struct CompletionCache {
    entries: DashMap<String, ChatExchange>,
    sink: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl CompletionCache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        CompletionCache { entries: DashMap::new(), sink: Mutex::new(None), path: None }
    }

    /// Open (creating if absent) a JSON-lines cache file and load its
    /// entries. Later duplicates of a key replace earlier ones, matching
    /// append-only update semantics.
    pub fn open(path: &Path) -> Result<Self> {
        let entries = DashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let exchange: ChatExchange = serde_json::from_str(&line).map_err(|e| {
                    Error::json(format!("{} line {}", path.display(), lineno + 1), e)
                })?;
                entries.insert(exchange.key(), exchange);
            }
        }
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(CompletionCache {
            entries,
            sink: Mutex::new(Some(sink)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<ChatExchange> {
        self.entries.get(key).map(|e| e.clone())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert an exchange, appending it to the backing file when present.
    pub fn insert(&self, exchange: ChatExchange) -> Result<()> {
        let key = exchange.key();
        let mut sink = self.sink.lock().expect("cache sink lock");
        if let Some(file) = sink.as_mut() {
            let line = serde_json::to_string(&exchange)
                .map_err(|e| Error::json("serializing cache entry", e))?;
            let path = self.path.clone().unwrap_or_default();
            writeln!(file, "{line}").map_err(|e| Error::io(&path, e))?;
            file.flush().map_err(|e| Error::io(&path, e))?;
        }
        drop(sink);
        self.entries.insert(key, exchange);
        Ok(())
    }

    /// Snapshot of all entries, sorted by key (deterministic for export).
    pub fn entries_sorted(&self) -> Vec<ChatExchange> {
        let mut all: Vec<(String, ChatExchange)> =
            self.entries.iter().map(|e| (e.key().clone(), e.value().clone())).collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all.into_iter().map(|(_, v)| v).collect()
    }
}

/// A finished completion.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    /// The backend stopped at the token limit; the tail of the answer may be
    /// missing.
    pub truncated: bool,
    pub from_cache: bool,
}

type ScriptFn = Arc<dyn Fn(&str) -> String + Send + Sync>;

/// Result of one network fetch, shared with coalesced waiters.
type FlightResult = std::result::Result<Completion, String>;

struct Flight {
    slot: Mutex<Option<FlightResult>>,
    ready: Condvar,
}

impl Flight {
    fn new() -> Self {
        Flight { slot: Mutex::new(None), ready: Condvar::new() }
    }

    fn wait(&self) -> FlightResult {
        let mut slot = self.slot.lock().expect("flight lock");
        while slot.is_none() {
            slot = self.ready.wait(slot).expect("flight wait");
        }
        slot.clone().expect("checked above")
    }

    fn finish(&self, result: FlightResult) {
        *self.slot.lock().expect("flight lock") = Some(result);
        self.ready.notify_all();
    }
}

/// Completion client over one backend and one cache.
pub struct CompletionClient {
    cfg: BackendConfig,
    cache: CompletionCache,
    script: Option<ScriptFn>,
    network_calls: AtomicU64,
    /// Running sum of prompt token estimates, cache hits included, so replay
    /// rehearsals predict live-run volume.
    used_tokens: AtomicU64,
    /// Hard cap on `used_tokens`; a completion that would cross it is refused
    /// before any transport work.
    budget: Option<u64>,
    inflight: Mutex<HashMap<String, Arc<Flight>>>,
    http: OnceLock<reqwest::blocking::Client>,
}

impl CompletionClient {
    /// Build a client from configuration. Scripted configs need
    /// [`CompletionClient::scripted`] instead, since the closure can't come
    /// from serialized config.
    pub fn new(cfg: BackendConfig) -> Result<Self> {
        if cfg.backend_kind == BackendKind::Scripted {
            return Err(Error::Config(
                "scripted backend requires a closure; use CompletionClient::scripted".into(),
            ));
        }
        let cache = match &cfg.cache_path {
            Some(path) => CompletionCache::open(path)?,
            None => CompletionCache::in_memory(),
        };
        Ok(Self::with_cache(cfg, cache))
    }

    /// Build a client over an existing cache (ignores `cfg.cache_path`).
    pub fn with_cache(cfg: BackendConfig, cache: CompletionCache) -> Self {
        CompletionClient {
            cfg,
            cache,
            script: None,
            network_calls: AtomicU64::new(0),
            used_tokens: AtomicU64::new(0),
            budget: None,
            inflight: Mutex::new(HashMap::new()),
            http: OnceLock::new(),
        }
    }

    /// Cap the total estimated prompt tokens this client may spend.
    pub fn with_budget(mut self, budget: Option<u64>) -> Self {
        self.budget = budget;
        self
    }

    /// A deterministic in-process oracle: `script` maps the full prompt text
    /// to the response text.
    pub fn scripted<F>(script: F) -> Self
    where
        F: Fn(&str) -> String + Send + Sync + 'static,
    {
        let cfg = BackendConfig { backend_kind: BackendKind::Scripted, ..BackendConfig::default() };
        let mut client = Self::with_cache(cfg, CompletionCache::in_memory());
        client.script = Some(Arc::new(script));
        client
    }

    /// A replay client over a preloaded cache.
    pub fn replay(cache: CompletionCache) -> Self {
        let cfg = BackendConfig { backend_kind: BackendKind::Replay, ..BackendConfig::default() };
        Self::with_cache(cfg, cache)
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &CompletionCache {
        &self.cache
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.cfg.backend_kind
    }

    /// How many network requests this client has issued (attempts included).
    pub fn network_call_count(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    /// Estimated prompt tokens spent so far (see [`estimate_tokens`]).
    pub fn used_token_estimate(&self) -> u64 {
        self.used_tokens.load(Ordering::SeqCst)
    }

    /// The cache key `complete` would use for this prompt under the current
    /// configuration.
    pub fn key_for(&self, prompt: &str) -> String {
        cache_key(&self.cfg.model_name, self.cfg.temperature, self.cfg.max_tokens, prompt)
    }

    /// Complete a prompt. The cache is consulted first; scripted closures
    /// bypass it (they are already pure).
    pub fn complete(&self, prompt: &str) -> Result<Completion> {
        if prompt.is_empty() {
            return Err(Error::Config("refusing to complete an empty prompt".into()));
        }
        let estimate = estimate_tokens(prompt) as u64;
        let spent = self.used_tokens.fetch_add(estimate, Ordering::SeqCst) + estimate;
        if let Some(budget) = self.budget {
            if spent > budget {
                return Err(Error::BudgetExceeded { estimated: spent, budget });
            }
        }
        if let Some(script) = &self.script {
            let text = script(prompt);
            return Ok(Completion { text, truncated: false, from_cache: false });
        }
        let key = self.key_for(prompt);
        if let Some(exchange) = self.cache.get(&key) {
            return Ok(Completion {
                text: exchange.response_text,
                truncated: exchange.truncated,
                from_cache: true,
            });
        }
        match self.cfg.backend_kind {
            BackendKind::Replay => Err(Error::ReplayMiss { key }),
            BackendKind::Scripted => unreachable!("scripted handled above"),
            BackendKind::HttpChat => self.fetch_coalesced(&key, prompt),
        }
    }

    /// Serve a miss through the in-flight table: the first caller for a key
    /// performs the network fetch, later callers wait for its result.
    fn fetch_coalesced(&self, key: &str, prompt: &str) -> Result<Completion> {
        let (flight, leader) = {
            let mut inflight = self.inflight.lock().expect("inflight lock");
            match inflight.get(key) {
                Some(flight) => (Arc::clone(flight), false),
                None => {
                    let flight = Arc::new(Flight::new());
                    inflight.insert(key.to_string(), Arc::clone(&flight));
                    (flight, true)
                }
            }
        };
        if !leader {
            return flight.wait().map_err(|detail| Error::BackendUnavailable {
                attempts: self.cfg.retries + 1,
                detail,
            });
        }
        let outcome = self.fetch_and_store(prompt);
        let shared: FlightResult = match &outcome {
            Ok(completion) => Ok(completion.clone()),
            Err(err) => Err(err.to_string()),
        };
        flight.finish(shared);
        self.inflight.lock().expect("inflight lock").remove(key);
        outcome
    }

    fn http_client(&self) -> Result<&reqwest::blocking::Client> {
        if self.http.get().is_none() {
            let built = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(self.cfg.timeout_secs))
                .build()
                .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
            let _ = self.http.set(built);
        }
        Ok(self.http.get().expect("just initialized"))
    }

    fn fetch_and_store(&self, prompt: &str) -> Result<Completion> {
        let api_key = std::env::var("P2T_API_KEY")
            .map_err(|_| Error::Config("P2T_API_KEY is not set".into()))?;
        let body = serde_json::json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let client = self.http_client()?;
        let attempts = self.cfg.retries + 1;
        let mut last_detail = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(Duration::from_millis(50 * u64::from(attempt - 1)));
            }
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            let sent = client
                .post(&self.cfg.base_url)
                .bearer_auth(&api_key)
                .json(&body)
                .send();
            let response = match sent {
                Ok(response) => response,
                Err(e) => {
                    last_detail = format!("transport error: {e}");
                    continue; // Transport failures are retryable.
                }
            };
            let status = response.status();
            if status.is_server_error() || status.as_u16() == 429 {
                last_detail = format!("retryable status {status}");
                continue;
            }
            if !status.is_success() {
                return Err(Error::BackendUnavailable {
                    attempts: attempt,
                    detail: format!("non-retryable status {status}"),
                });
            }
            let payload: serde_json::Value =
                response.json().map_err(|e| Error::MalformedResponse(e.to_string()))?;
            return self.record(prompt, &payload);
        }
        Err(Error::BackendUnavailable { attempts, detail: last_detail })
    }

    /// Extract the completion from a chat response payload and persist the
    /// exchange.
    fn record(&self, prompt: &str, payload: &serde_json::Value) -> Result<Completion> {
        let choice = payload
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| Error::MalformedResponse("response has no choices".into()))?;
        let text = choice
            .get("message")
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str())
            .ok_or_else(|| Error::MalformedResponse("choice has no message content".into()))?
            .to_string();
        let truncated =
            choice.get("finish_reason").and_then(|f| f.as_str()) == Some("length");
        let timestamp =
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.cache.insert(ChatExchange {
            prompt_text: prompt.to_string(),
            response_text: text.clone(),
            model_name: self.cfg.model_name.clone(),
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
            truncated,
            timestamp,
        })?;
        Ok(Completion { text, truncated, from_cache: false })
    }
}

/// Approximate token count: each maximal alphanumeric run counts one, and
/// each non-whitespace, non-alphanumeric character counts one. Whitespace
/// separates. Monotone under appending text.
pub fn estimate_tokens(text: &str) -> usize {
    let mut count = 0usize;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}
