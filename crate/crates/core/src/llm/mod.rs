//! Chat-completion gateway with record/replay transcripts.
//!
//! Every model call goes through [`Gateway`]. In `live` mode it talks to the
//! provider; `record` additionally appends each exchange to a JSONL
//! transcript; `replay` answers purely from a transcript and never touches
//! the transport. Exchanges are keyed by a digest of the prompt, so a
//! changed prompt (or a changed temperature or sample count) misses instead
//! of silently reusing an old answer.

mod transcript;
mod transport;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use transcript::{Slot, TranscriptEntry, TranscriptStore};
pub use transport::{FnTransport, HttpTransport, Transport};

use crate::util::sha256_hex;

/// Sampling temperature used unless the run config overrides it.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;
pub const DEFAULT_RETRIES: u32 = 3;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("no transcript entry for prompt {digest} (tag `{tag}`)")]
    TranscriptMiss { digest: String, tag: String },
    #[error("transport error: {message}")]
    Transport { message: String, retriable: bool },
    #[error("provider returned status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("all {n} samples failed: {errors:?}")]
    NoCompletions { n: usize, errors: Vec<String> },
    #[error("llm configuration: {0}")]
    Config(String),
    #[error("transcript io: {0}")]
    Io(String),
}

impl LlmError {
    pub fn is_retriable(&self) -> bool {
        match self {
            LlmError::Transport { retriable, .. } => *retriable,
            LlmError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    Live,
    Record,
    #[default]
    Replay,
}

impl std::str::FromStr for LlmMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(LlmMode::Live),
            "record" => Ok(LlmMode::Record),
            "replay" => Ok(LlmMode::Replay),
            other => Err(format!("unknown llm mode `{other}` (live|record|replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Purpose label: plan, code, tests, controller or summary.
    pub tag: String,
}

impl Prompt {
    pub fn user(tag: &str, system: impl Into<String>, user: impl Into<String>) -> Self {
        Prompt {
            system: system.into(),
            messages: vec![Message {
                role: "user".into(),
                content: user.into(),
            }],
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            tag: tag.into(),
        }
    }

    /// Digest over (system, messages, temperature, sample count, tag).
    pub fn digest(&self, n: usize) -> String {
        let key = serde_json::json!({
            "system": self.system,
            "messages": self.messages,
            "temperature": self.temperature,
            "n": n,
            "tag": self.tag,
        });
        sha256_hex(key.to_string().as_bytes())
    }

    pub fn check(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::Config("prompt has no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            model: "gpt-4o".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            timeout_secs: 120,
            retries: DEFAULT_RETRIES,
            backoff_ms: 250,
        }
    }
}

/// Completions of one multi-sample request, in sample order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Samples {
    pub slots: Vec<Result<String, String>>,
    /// Model id reported for these samples (recorded one under replay).
    pub model: String,
}

impl Samples {
    pub fn texts(&self) -> Vec<String> {
        self.slots
            .iter()
            .filter_map(|s| s.as_ref().ok().cloned())
            .collect()
    }

    pub fn slot_errors(&self) -> Vec<(usize, String)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().err().map(|e| (i, e.clone())))
            .collect()
    }
}

pub struct Gateway {
    store: TranscriptStore,
    transport: Arc<dyn Transport>,
    config: ProviderConfig,
    wire_calls: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.store.mode())
            .field("model", &self.config.model)
            .finish()
    }
}

impl Gateway {
    pub fn new(
        store: TranscriptStore,
        transport: Arc<dyn Transport>,
        config: ProviderConfig,
    ) -> Result<Self, LlmError> {
        if store.mode() != LlmMode::Replay {
            if config.base_url.trim().is_empty() {
                return Err(LlmError::Config(
                    "live and record modes need LLM_BASE_URL".into(),
                ));
            }
            if config.api_key.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::Config(
                    "live and record modes need LLM_API_KEY".into(),
                ));
            }
        }
        Ok(Gateway {
            store,
            transport,
            config,
            wire_calls: AtomicUsize::new(0),
        })
    }

    /// Replay-only gateway over an in-memory or on-disk store.
    pub fn replay(store: TranscriptStore) -> Self {
        Gateway {
            store,
            transport: Arc::new(FnTransport::new(|_, _, _| {
                Err(LlmError::Config(
                    "replay mode never performs network calls".into(),
                ))
            })),
            config: ProviderConfig::default(),
            wire_calls: AtomicUsize::new(0),
        }
    }

    pub fn mode(&self) -> LlmMode {
        self.store.mode()
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn store(&self) -> &TranscriptStore {
        &self.store
    }

    /// Number of transport calls made so far.
    pub fn wire_calls(&self) -> usize {
        self.wire_calls.load(Ordering::SeqCst)
    }

    /// Builds a single-user-message prompt with the configured sampling.
    pub fn prompt(&self, tag: &str, system: String, user: String) -> Prompt {
        let mut p = Prompt::user(tag, system, user);
        p.temperature = self.config.temperature;
        p.max_tokens = self.config.max_tokens;
        p
    }

    pub fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let samples = self.complete_many(prompt, 1)?;
        samples
            .slots
            .into_iter()
            .next()
            .expect("one slot")
            .map_err(|e| LlmError::NoCompletions {
                n: 1,
                errors: vec![e],
            })
    }

    /// `n` independent samples; partial failures are reported per slot, and
    /// an error is returned only when every slot failed.
    pub fn complete_many(&self, prompt: &Prompt, n: usize) -> Result<Samples, LlmError> {
        prompt.check()?;
        if n == 0 {
            return Err(LlmError::Config("sample count must be >= 1".into()));
        }
        let digest = prompt.digest(n);
        let samples = match self.store.mode() {
            LlmMode::Replay => {
                let entry = self.store.next(&digest, &prompt.tag)?;
                Samples {
                    slots: entry.slots.into_iter().map(Slot::into_result).collect(),
                    model: entry.model,
                }
            }
            LlmMode::Live | LlmMode::Record => {
                let slots = self.sample_wire(prompt, n);
                if self.store.mode() == LlmMode::Record {
                    self.store.append(TranscriptEntry::new(
                        &digest,
                        prompt,
                        &self.config.model,
                        n,
                        &slots,
                    ))?;
                }
                Samples {
                    slots,
                    model: self.config.model.clone(),
                }
            }
        };
        if samples.texts().is_empty() {
            return Err(LlmError::NoCompletions {
                n,
                errors: samples.slot_errors().into_iter().map(|(_, e)| e).collect(),
            });
        }
        Ok(samples)
    }

    fn sample_wire(&self, prompt: &Prompt, n: usize) -> Vec<Result<String, String>> {
        if n == 1 {
            return vec![self.call_with_retry(prompt, 0).map_err(|e| e.to_string())];
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .map(|i| s.spawn(move || self.call_with_retry(prompt, i as u64)))
                .collect();
            handles
                .into_iter()
                .map(|h| match h.join() {
                    Ok(r) => r.map_err(|e| e.to_string()),
                    Err(_) => Err("sample thread panicked".to_string()),
                })
                .collect()
        })
    }

    fn call_with_retry(&self, prompt: &Prompt, seed: u64) -> Result<String, LlmError> {
        let attempts = self.config.retries.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms << (attempt - 1),
                ));
            }
            self.wire_calls.fetch_add(1, Ordering::SeqCst);
            match self.transport.chat(&self.config, prompt, seed) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retriable() => {
                    log::warn!("llm call failed (attempt {}/{attempts}): {e}", attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// First JSON value found in free text: the whole reply, a fenced block,
/// or the first parseable object or array.
pub fn extract_json(text: &str) -> Option<serde_json::Value> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    let mut rest = trimmed;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map_or(0, |p| p + 1);
        let body = &after[body_start..];
        let Some(end) = body.find("```") else { break };
        if let Ok(v) = serde_json::from_str(body[..end].trim()) {
            return Some(v);
        }
        rest = &body[end + 3..];
    }
    for (pos, ch) in trimmed.char_indices() {
        if ch == '{' || ch == '[' {
            let mut stream = serde_json::Deserializer::from_str(&trimmed[pos..])
                .into_iter::<serde_json::Value>();
            if let Some(Ok(v)) = stream.next() {
                return Some(v);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    fn counting(fail_seed: Option<u64>) -> (Arc<AtomicUsize>, Arc<dyn Transport>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let t = FnTransport::new(move |_, p: &Prompt, seed| {
            c.fetch_add(1, Ordering::SeqCst);
            if Some(seed) == fail_seed {
                Err(LlmError::Http {
                    status: 400,
                    body: "bad".into(),
                })
            } else {
                Ok(format!("{}#{seed}", p.tag))
            }
        });
        (calls, Arc::new(t))
    }

    fn keyed() -> ProviderConfig {
        ProviderConfig {
            api_key: Some("k".into()),
            backoff_ms: 1,
            ..Default::default()
        }
    }

    #[test]
    fn record_then_replay_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let (calls, t) = counting(None);
        let g = Gateway::new(TranscriptStore::record(&path).unwrap(), t, keyed()).unwrap();
        let p = Prompt::user("plan", "sys", "Function: f");
        assert_eq!(g.complete(&p).unwrap(), "plan#0");
        let many = g.complete_many(&p, 3).unwrap();
        assert_eq!(many.texts(), vec!["plan#0", "plan#1", "plan#2"]);
        assert_eq!(calls.load(Ordering::SeqCst), 4);

        let (calls2, t2) = counting(None);
        let r = Gateway::new(
            TranscriptStore::replay(&path).unwrap(),
            t2,
            ProviderConfig::default(),
        )
        .unwrap();
        assert_eq!(r.complete(&p).unwrap(), "plan#0");
        assert_eq!(r.complete_many(&p, 3).unwrap().texts(), many.texts());
        assert_eq!(calls2.load(Ordering::SeqCst), 0);
        assert_eq!(r.wire_calls(), 0);
        assert!(matches!(
            r.complete(&p),
            Err(LlmError::TranscriptMiss { .. })
        ));
    }

    #[test]
    fn partial_failure_keeps_slots() {
        let (_, t) = counting(Some(1));
        let g = Gateway::new(TranscriptStore::live(), t, keyed()).unwrap();
        let s = g.complete_many(&Prompt::user("code", "s", "u"), 3).unwrap();
        assert_eq!(s.texts().len(), 2);
        assert_eq!(s.slot_errors().len(), 1);
        assert_eq!(s.slot_errors()[0].0, 1);
    }

    #[test]
    fn retriable_errors_are_retried() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let t = FnTransport::new(move |_, _, _| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(LlmError::Http {
                    status: 503,
                    body: String::new(),
                })
            } else {
                Ok("ok".into())
            }
        });
        let g = Gateway::new(TranscriptStore::live(), Arc::new(t), keyed()).unwrap();
        assert_eq!(g.complete(&Prompt::user("x", "s", "u")).unwrap(), "ok");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn digest_covers_temperature_and_count() {
        let p = Prompt::user("t", "s", "u");
        let mut q = p.clone();
        q.temperature = 0.7;
        assert_ne!(p.digest(1), q.digest(1));
        assert_ne!(p.digest(1), p.digest(3));
        assert_eq!(p.digest(2), p.clone().digest(2));
        assert_eq!(p.temperature, 0.1);
    }

    #[test]
    fn live_mode_needs_credentials() {
        let (_, t) = counting(None);
        assert!(matches!(
            Gateway::new(TranscriptStore::live(), t, ProviderConfig::default()),
            Err(LlmError::Config(_))
        ));
    }

    #[test]
    fn json_extraction() {
        assert_eq!(extract_json("{\"a\":1}").unwrap()["a"], 1);
        assert_eq!(
            extract_json("Sure!\n```json\n[1,2]\n```\nbye").unwrap()[1],
            2
        );
        assert_eq!(
            extract_json("plan: {\"u\": [3]} trailing").unwrap()["u"][0],
            3
        );
        assert!(extract_json("nothing here").is_none());
    }
}
