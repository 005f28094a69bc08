//! Chat-completion gateway with three interchangeable backends.
//!
//! `live` talks to a chat-completion HTTP endpoint with bounded retries,
//! `replay` answers from a recorded store keyed by a canonical request
//! digest, and `mock` produces responses from a scripted transform of
//! the prompt. Every exchange can be persisted to an append-only JSONL
//! store for later replay.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
const MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, system: Option<&str>, user: &str, seed: u64) -> Self {
        let mut messages = Vec::new();
        if let Some(system) = system {
            messages.push(ChatMessage {
                role: Role::System,
                content: system.to_string(),
            });
        }
        messages.push(ChatMessage {
            role: Role::User,
            content: user.to_string(),
        });
        Self {
            model: model.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            seed,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Content hash of the canonicalized request. Model, every message
    /// (role and content), temperature, seed and max_tokens all feed
    /// the digest.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("request serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response_text: String,
    pub latency_ms: u64,
    pub backend: BackendKind,
    pub request_digest: String,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no recorded response for request digest {0}")]
    ReplayMiss(String),
    #[error("rate limited after {MAX_RETRIES} retries")]
    RateLimited,
    #[error("malformed response from backend: {0}")]
    MalformedResponse(String),
    #[error("store error: {0}")]
    Store(#[from] StoreError),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreRecord {
    request_digest: String,
    request: ChatRequest,
    response_text: String,
    backend: BackendKind,
    latency_ms: u64,
}

/// Append-only JSONL store keyed by request digest. Later records for
/// the same digest win on load, so re-recording overrides cleanly.
#[derive(Debug)]
pub struct ReplayStore {
    path: PathBuf,
    entries: HashMap<String, String>,
}

impl ReplayStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = std::fs::File::open(path)?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: StoreRecord =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        line: idx + 1,
                        reason: e.to_string(),
                    })?;
                entries.insert(record.request_digest, record.response_text);
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn lookup(&self, digest: &str) -> Option<&str> {
        self.entries.get(digest).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn record(&mut self, exchange: &ChatExchange) -> Result<(), StoreError> {
        let record = StoreRecord {
            request_digest: exchange.request_digest.clone(),
            request: exchange.request.clone(),
            response_text: exchange.response_text.clone(),
            backend: exchange.backend,
            latency_ms: exchange.latency_ms,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(file, "{line}")?;
        self.entries
            .insert(record.request_digest, record.response_text);
        Ok(())
    }
}

/// One rule of a mock script: if the prompt contains `contains`, answer
/// with `response`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: String,
    pub response: String,
}

/// Scripted mock backend definition. When no rule matches, the last
/// `<CODE>` block of the prompt is echoed back (a pass-through repair).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::BackendUnavailable(format!("mock script: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::BackendUnavailable(format!("mock script: {e}")))
    }

    fn respond(&self, prompt: &str) -> String {
        for rule in &self.rules {
            if prompt.contains(&rule.contains) {
                return rule.response.clone();
            }
        }
        echo_last_code_block(prompt)
    }
}

fn echo_last_code_block(prompt: &str) -> String {
    let code = prompt
        .rfind("<CODE>\n")
        .map(|at| &prompt[at + 7..])
        .and_then(|tail| tail.find("\n<QUESTION>").map(|end| &tail[..end]))
        .unwrap_or(prompt);
    format!("<CORRECTION>\n{code}")
}

enum Backend {
    Live {
        url: String,
        api_key: Option<String>,
        client: reqwest::blocking::Client,
        retry_base: Duration,
    },
    Replay(ReplayStore),
    Mock(MockScript),
}

/// Gateway over one configured backend, optionally recording every
/// exchange to a store.
pub struct Gateway {
    backend: Backend,
    recorder: Option<Mutex<ReplayStore>>,
}

impl Gateway {
    pub fn live(url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            backend: Backend::Live {
                url: url.into(),
                api_key,
                client: reqwest::blocking::Client::new(),
                retry_base: Duration::from_millis(250),
            },
            recorder: None,
        }
    }

    pub fn replay(store: ReplayStore) -> Self {
        Self {
            backend: Backend::Replay(store),
            recorder: None,
        }
    }

    pub fn mock(script: MockScript) -> Self {
        Self {
            backend: Backend::Mock(script),
            recorder: None,
        }
    }

    /// Persist every completed exchange into `store`.
    pub fn with_recording(mut self, store: ReplayStore) -> Self {
        self.recorder = Some(Mutex::new(store));
        self
    }

    pub fn kind(&self) -> BackendKind {
        match self.backend {
            Backend::Live { .. } => BackendKind::Live,
            Backend::Replay(_) => BackendKind::Replay,
            Backend::Mock(_) => BackendKind::Mock,
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        let digest = request.digest();
        let exchange = match &self.backend {
            Backend::Replay(store) => {
                let response = store
                    .lookup(&digest)
                    .ok_or_else(|| GatewayError::ReplayMiss(digest.clone()))?;
                ChatExchange {
                    request: request.clone(),
                    response_text: response.to_string(),
                    latency_ms: 0,
                    backend: BackendKind::Replay,
                    request_digest: digest,
                }
            }
            Backend::Mock(script) => {
                let start = Instant::now();
                let response = script.respond(request.last_user_content());
                ChatExchange {
                    request: request.clone(),
                    response_text: response,
                    latency_ms: start.elapsed().as_millis() as u64,
                    backend: BackendKind::Mock,
                    request_digest: digest,
                }
            }
            Backend::Live {
                url,
                api_key,
                client,
                retry_base,
            } => {
                let start = Instant::now();
                let response =
                    live_complete(client, url, api_key.as_deref(), request, *retry_base)?;
                ChatExchange {
                    request: request.clone(),
                    response_text: response,
                    latency_ms: start.elapsed().as_millis() as u64,
                    backend: BackendKind::Live,
                    request_digest: digest,
                }
            }
        };
        if let Some(recorder) = &self.recorder {
            let mut store = recorder.lock().expect("recorder lock");
            store.record(&exchange)?;
        }
        Ok(exchange)
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    #[serde(default)]
    message: Option<WireMessage>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    content: String,
}

fn live_complete(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    request: &ChatRequest,
    retry_base: Duration,
) -> Result<String, GatewayError> {
    let mut last_error: Option<GatewayError> = None;
    for attempt in 0..=MAX_RETRIES {
        if attempt > 0 {
            std::thread::sleep(retry_base * 2u32.pow(attempt - 1));
        }
        let mut builder = client.post(url).json(request);
        if let Some(key) = api_key {
            builder = builder.bearer_auth(key);
        }
        match builder.send() {
            Ok(resp) => {
                let status = resp.status();
                if status.as_u16() == 429 {
                    last_error = Some(GatewayError::RateLimited);
                    continue;
                }
                if status.is_server_error() {
                    last_error = Some(GatewayError::BackendUnavailable(format!(
                        "server returned {status}"
                    )));
                    continue;
                }
                if !status.is_success() {
                    return Err(GatewayError::BackendUnavailable(format!(
                        "server returned {status}"
                    )));
                }
                let body: WireResponse = resp
                    .json()
                    .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
                let choice = body.choices.into_iter().next().ok_or_else(|| {
                    GatewayError::MalformedResponse("empty choices list".into())
                })?;
                return choice
                    .message
                    .map(|m| m.content)
                    .or(choice.text)
                    .ok_or_else(|| {
                        GatewayError::MalformedResponse("choice carries no text".into())
                    });
            }
            Err(e) => {
                last_error = Some(GatewayError::BackendUnavailable(e.to_string()));
            }
        }
    }
    Err(last_error.unwrap_or_else(|| GatewayError::BackendUnavailable("unknown".into())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(seed: u64, temperature: f64) -> ChatRequest {
        let mut req = ChatRequest::new("test-model", Some("sys"), "fix this", seed);
        req.temperature = temperature;
        req
    }

    #[test]
    fn digest_is_stable_for_identical_requests() {
        assert_eq!(request(1, 0.2).digest(), request(1, 0.2).digest());
    }

    #[test]
    fn digest_varies_with_every_field() {
        let base = request(1, 0.2);
        assert_ne!(base.digest(), request(2, 0.2).digest());
        assert_ne!(base.digest(), request(1, 0.3).digest());
        let mut other = request(1, 0.2);
        other.max_tokens += 1;
        assert_ne!(base.digest(), other.digest());
        let mut other = request(1, 0.2);
        other.messages[1].content.push(' ');
        assert_ne!(base.digest(), other.digest());
        let mut other = request(1, 0.2);
        other.model = "other".into();
        assert_ne!(base.digest(), other.digest());
    }

    #[test]
    fn record_then_lookup_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let req = request(1, 0.2);
        let exchange = ChatExchange {
            request_digest: req.digest(),
            request: req.clone(),
            response_text: "the answer".into(),
            latency_ms: 12,
            backend: BackendKind::Mock,
        };
        let mut store = ReplayStore::open(&path).unwrap();
        store.record(&exchange).unwrap();
        assert_eq!(store.lookup(&req.digest()), Some("the answer"));
        // Re-open simulates a process restart.
        let reopened = ReplayStore::open(&path).unwrap();
        assert_eq!(reopened.lookup(&req.digest()), Some("the answer"));
    }

    #[test]
    fn replay_hit_has_zero_latency() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let req = request(3, 0.2);
        let mut store = ReplayStore::open(&path).unwrap();
        store
            .record(&ChatExchange {
                request_digest: req.digest(),
                request: req.clone(),
                response_text: "stored".into(),
                latency_ms: 99,
                backend: BackendKind::Live,
            })
            .unwrap();
        let gateway = Gateway::replay(store);
        let exchange = gateway.complete(&req).unwrap();
        assert_eq!(exchange.response_text, "stored");
        assert_eq!(exchange.latency_ms, 0);
        assert_eq!(exchange.backend, BackendKind::Replay);
    }

    #[test]
    fn replay_miss_reports_digest() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::open(&dir.path().join("empty.jsonl")).unwrap();
        let gateway = Gateway::replay(store);
        let req = request(4, 0.2);
        match gateway.complete(&req) {
            Err(GatewayError::ReplayMiss(d)) => assert_eq!(d, req.digest()),
            other => panic!("expected ReplayMiss, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_store_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            ReplayStore::open(&path),
            Err(StoreError::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn mock_rule_matching_and_echo_fallback() {
        let script = MockScript {
            rules: vec![MockRule {
                contains: "frobnicate".into(),
                response: "<CORRECTION>\ndef fixed(): pass".into(),
            }],
        };
        let gateway = Gateway::mock(script);
        let hit = ChatRequest::new("m", None, "please fix frobnicate() here", 1);
        assert!(gateway
            .complete(&hit)
            .unwrap()
            .response_text
            .contains("def fixed"));
        let miss = ChatRequest::new(
            "m",
            None,
            "<CODE>\ndef same(): pass\n<QUESTION>\nq\n<CORRECTION>\n",
            1,
        );
        let echoed = gateway.complete(&miss).unwrap();
        assert_eq!(echoed.response_text, "<CORRECTION>\ndef same(): pass");
    }

    #[test]
    fn mock_records_exchanges_when_recording() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let gateway =
            Gateway::mock(MockScript::default()).with_recording(ReplayStore::open(&path).unwrap());
        let req = request(7, 0.2);
        gateway.complete(&req).unwrap();
        let store = ReplayStore::open(&path).unwrap();
        assert!(store.lookup(&req.digest()).is_some());
    }
}
