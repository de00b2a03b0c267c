//! Single choke-point for all LLM interactions: generation, judging, and
//! translation, with deterministic record/replay so every pipeline stage is
//! testable offline.

mod cassette;
mod transport;

pub use cassette::{fingerprint, Cassette};
pub use transport::{HttpTransport, Transport, TransportFailure};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::AspectLabel;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("replay miss: no recorded response for fingerprint {0}")]
    ReplayMiss(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    TransportError { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("judge verdict unparseable: {0:?}")]
    JudgeUnparseable(String),
    #[error("language {0:?} is not in the configured translation set")]
    LanguageNotConfigured(String),
    #[error("invalid generation params: {0}")]
    InvalidParams(String),
    #[error("gateway has no transport configured for mode {0:?}")]
    NoTransport(GatewayMode),
    #[error("cassette error: {0}")]
    Cassette(#[from] cassette::CassetteError),
}

/// Sampling parameters attached to every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub json_mode: bool,
}

impl GenParams {
    pub fn new(
        temperature: f64,
        top_p: f64,
        max_tokens: u32,
        json_mode: bool,
    ) -> Result<Self, GatewayError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(GatewayError::InvalidParams(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        if !(top_p > 0.0 && top_p <= 1.0) {
            return Err(GatewayError::InvalidParams(format!(
                "top_p {top_p} outside (0, 1]"
            )));
        }
        if max_tokens == 0 {
            return Err(GatewayError::InvalidParams("max_tokens must be positive".into()));
        }
        Ok(GenParams {
            temperature,
            top_p,
            max_tokens,
            json_mode,
        })
    }

    /// Deterministic decoding: temperature 0, top_p 1.
    pub fn deterministic(max_tokens: u32, json_mode: bool) -> Self {
        GenParams {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens,
            json_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// One chat completion request. `tag` labels the pipeline stage for call
/// accounting; it does not participate in the fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub params: GenParams,
    pub tag: String,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>, params: GenParams, tag: &str) -> Self {
        assert!(!messages.is_empty(), "a request needs at least one message");
        ChatRequest {
            messages,
            params,
            tag: tag.to_string(),
        }
    }

    pub fn system_user(system: &str, user: &str, params: GenParams, tag: &str) -> Self {
        ChatRequest::new(
            vec![
                Message {
                    role: Role::System,
                    content: system.to_string(),
                },
                Message {
                    role: Role::User,
                    content: user.to_string(),
                },
            ],
            params,
            tag,
        )
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.messages, &self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    /// Call the transport and persist every response under its fingerprint.
    Record,
    /// Serve responses from the cassette only; a miss is an error, never a call.
    Replay,
    /// Call the transport without touching any cassette.
    Passthrough,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            backoff_base_ms: 1000,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff: base, 2x, 4x, ... Monotonically non-decreasing.
    pub fn delay_before_attempt(&self, attempt: u32) -> Duration {
        debug_assert!(attempt >= 1);
        if attempt <= 1 {
            return Duration::ZERO;
        }
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << (attempt - 2).min(20)))
    }
}

/// The gateway. Shareable across worker threads; cassette writes and call
/// accounting are serialized internally.
pub struct LlmGateway {
    mode: GatewayMode,
    transport: Option<Box<dyn Transport>>,
    cassette: Option<Mutex<Cassette>>,
    cassette_path: Option<PathBuf>,
    retry: RetryPolicy,
    concurrency: usize,
    model: String,
    languages: Vec<String>,
    call_counts: Mutex<BTreeMap<String, u64>>,
}

pub struct GatewayBuilder {
    mode: GatewayMode,
    transport: Option<Box<dyn Transport>>,
    cassette_path: Option<PathBuf>,
    retry: RetryPolicy,
    concurrency: usize,
    model: String,
    languages: Vec<String>,
}

/// Table 4's evaluation languages; the default translation set.
pub const DEFAULT_LANGUAGES: [&str; 6] = ["en", "fr", "de", "es", "it", "pl"];

impl GatewayBuilder {
    pub fn transport(mut self, transport: Box<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn cassette_path(mut self, path: PathBuf) -> Self {
        self.cassette_path = Some(path);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn concurrency(mut self, bound: usize) -> Self {
        self.concurrency = bound.max(1);
        self
    }

    pub fn model(mut self, model: &str) -> Self {
        self.model = model.to_string();
        self
    }

    pub fn languages(mut self, languages: Vec<String>) -> Self {
        self.languages = languages;
        self
    }

    pub fn build(self) -> Result<LlmGateway, GatewayError> {
        let cassette = match self.mode {
            GatewayMode::Replay => {
                let path = self
                    .cassette_path
                    .as_ref()
                    .ok_or_else(|| GatewayError::InvalidParams("replay mode needs a cassette".into()))?;
                Some(Mutex::new(Cassette::load(path)?))
            }
            GatewayMode::Record => {
                let path = self
                    .cassette_path
                    .as_ref()
                    .ok_or_else(|| GatewayError::InvalidParams("record mode needs a cassette".into()))?;
                Some(Mutex::new(Cassette::load_or_empty(path)?))
            }
            GatewayMode::Passthrough => None,
        };
        if matches!(self.mode, GatewayMode::Record | GatewayMode::Passthrough)
            && self.transport.is_none()
        {
            return Err(GatewayError::NoTransport(self.mode));
        }
        Ok(LlmGateway {
            mode: self.mode,
            transport: self.transport,
            cassette,
            cassette_path: self.cassette_path,
            retry: self.retry,
            concurrency: self.concurrency,
            model: self.model,
            languages: self.languages,
            call_counts: Mutex::new(BTreeMap::new()),
        })
    }
}

impl LlmGateway {
    pub fn builder(mode: GatewayMode) -> GatewayBuilder {
        GatewayBuilder {
            mode,
            transport: None,
            cassette_path: None,
            retry: RetryPolicy::default(),
            concurrency: 8,
            model: "default".to_string(),
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Replay gateway over an existing cassette file.
    pub fn replay(path: &std::path::Path) -> Result<Self, GatewayError> {
        LlmGateway::builder(GatewayMode::Replay)
            .cassette_path(path.to_path_buf())
            .build()
    }

    /// Replay gateway over an empty in-memory cassette: every request is a
    /// miss. For stages configured to make no LLM calls at all.
    pub fn inert() -> Self {
        LlmGateway {
            mode: GatewayMode::Replay,
            transport: None,
            cassette: Some(Mutex::new(Cassette::default())),
            cassette_path: None,
            retry: RetryPolicy::default(),
            concurrency: 1,
            model: "inert".to_string(),
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            call_counts: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn concurrency(&self) -> usize {
        self.concurrency
    }

    /// Per-tag request counts accumulated so far.
    pub fn call_counts(&self) -> BTreeMap<String, u64> {
        self.call_counts.lock().expect("call count lock").clone()
    }

    /// Write the cassette back to disk (record mode only; no-op otherwise).
    pub fn persist(&self) -> Result<(), GatewayError> {
        if self.mode != GatewayMode::Record {
            return Ok(());
        }
        let (Some(cassette), Some(path)) = (&self.cassette, &self.cassette_path) else {
            return Ok(());
        };
        cassette.lock().expect("cassette lock").save(path)?;
        Ok(())
    }

    fn bump(&self, tag: &str) {
        *self
            .call_counts
            .lock()
            .expect("call count lock")
            .entry(tag.to_string())
            .or_insert(0) += 1;
    }

    /// Issue one completion. In replay mode this is a pure cassette lookup;
    /// in record mode the response is also stored under the fingerprint.
    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.bump(&request.tag);
        let fp = request.fingerprint();
        match self.mode {
            GatewayMode::Replay => {
                let cassette = self.cassette.as_ref().expect("replay mode has a cassette");
                cassette
                    .lock()
                    .expect("cassette lock")
                    .get(&fp)
                    .ok_or(GatewayError::ReplayMiss(fp))
            }
            GatewayMode::Record => {
                let response = self.call_with_retries(request)?;
                let cassette = self.cassette.as_ref().expect("record mode has a cassette");
                cassette
                    .lock()
                    .expect("cassette lock")
                    .insert(fp, response.clone());
                Ok(response)
            }
            GatewayMode::Passthrough => self.call_with_retries(request),
        }
    }

    fn call_with_retries(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let transport = self
            .transport
            .as_ref()
            .ok_or(GatewayError::NoTransport(self.mode))?;
        let body = wire_body(&self.model, request);
        let mut last_rate_limited = false;
        let mut last_message = String::new();
        for attempt in 1..=self.retry.max_attempts {
            let delay = self.retry.delay_before_attempt(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            match transport.send(&body) {
                Ok(response) => return Ok(response),
                Err(TransportFailure::Fatal(message)) => {
                    return Err(GatewayError::TransportError {
                        attempts: attempt,
                        message,
                    })
                }
                Err(TransportFailure::RateLimited(message)) => {
                    last_rate_limited = true;
                    last_message = message;
                }
                Err(TransportFailure::Transient(message)) => {
                    last_rate_limited = false;
                    last_message = message;
                }
            }
        }
        if last_rate_limited {
            Err(GatewayError::RateLimited {
                attempts: self.retry.max_attempts,
            })
        } else {
            Err(GatewayError::TransportError {
                attempts: self.retry.max_attempts,
                message: last_message,
            })
        }
    }

    /// Fan a batch of requests out across up to `concurrency` workers.
    /// Results come back in request order regardless of completion order.
    pub fn complete_many(&self, requests: &[ChatRequest]) -> Vec<Result<String, GatewayError>> {
        if requests.is_empty() {
            return Vec::new();
        }
        // Replay lookups are cheap; keep them on one thread.
        let workers = if self.mode == GatewayMode::Replay {
            1
        } else {
            self.concurrency.min(requests.len())
        };
        if workers <= 1 {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<String, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::SeqCst);
                    if idx >= requests.len() {
                        break;
                    }
                    let result = self.complete(&requests[idx]);
                    *slots[idx].lock().expect("result slot") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("result slot").expect("worker filled slot"))
            .collect()
    }

    /// Ask the judge model whether `aspect` is absent from `text` (neither
    /// explicitly nor implicitly mentioned). Only an unambiguous yes/no
    /// verdict is accepted.
    pub fn judge_aspect_absent(
        &self,
        text: &str,
        aspect: &AspectLabel,
    ) -> Result<bool, GatewayError> {
        let request = judge_request(text, aspect);
        let response = self.complete(&request)?;
        parse_verdict(&response)
    }

    /// Translate `text` into `target`. Identity when source and target tags
    /// match; otherwise a temperature-0 translation prompt.
    pub fn translate_text(
        &self,
        text: &str,
        source: &str,
        target: &str,
    ) -> Result<String, GatewayError> {
        if !self.languages.iter().any(|l| l == target) {
            return Err(GatewayError::LanguageNotConfigured(target.to_string()));
        }
        if source == target {
            return Ok(text.to_string());
        }
        let request = translate_request(text, target);
        self.complete(&request)
    }
}

pub fn judge_request(text: &str, aspect: &AspectLabel) -> ChatRequest {
    let system = "You are a strict annotation judge for aspect-based sentiment data. \
                  Answer with a single word: yes or no.";
    let user = format!(
        "Text: {text}\n\
         Aspect: {aspect}\n\n\
         Is the aspect \"{aspect}\" completely absent from the text, neither explicitly \
         nor implicitly mentioned? Answer with a single word: yes or no."
    );
    ChatRequest::system_user(system, &user, GenParams::deterministic(8, false), "judge")
}

pub fn translate_request(text: &str, target: &str) -> ChatRequest {
    let language = language_name(target);
    let system = "You are a professional translator. Output only the translation, nothing else.";
    let user = format!("Translate the following text into {language}:\n\n{text}");
    ChatRequest::system_user(system, &user, GenParams::deterministic(2048, false), "translate")
}

fn language_name(code: &str) -> String {
    match code {
        "en" => "English".to_string(),
        "fr" => "French".to_string(),
        "de" => "German".to_string(),
        "es" => "Spanish".to_string(),
        "it" => "Italian".to_string(),
        "pl" => "Polish".to_string(),
        other => other.to_string(),
    }
}

/// Case-insensitive parse of the first alphabetic token as yes/no.
fn parse_verdict(response: &str) -> Result<bool, GatewayError> {
    let first = response
        .split(|c: char| !c.is_alphabetic())
        .find(|tok| !tok.is_empty())
        .unwrap_or("");
    match first.to_lowercase().as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(GatewayError::JudgeUnparseable(response.to_string())),
    }
}

/// OpenAI-style chat-completions request body.
fn wire_body(model: &str, request: &ChatRequest) -> serde_json::Value {
    let messages: Vec<serde_json::Value> = request
        .messages
        .iter()
        .map(|m| serde_json::json!({"role": m.role.as_str(), "content": m.content}))
        .collect();
    let mut body = serde_json::json!({
        "model": model,
        "messages": messages,
        "temperature": request.params.temperature,
        "top_p": request.params.top_p,
        "max_tokens": request.params.max_tokens,
    });
    if request.params.json_mode {
        body["response_format"] = serde_json::json!({"type": "json_object"});
    }
    body
}
