//! Chat backends: the oracle-backed mock, cassette replay, and the live
//! HTTP client with an optional recorder.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatMessage, Prompt, PromptKind};
use crate::abduction::{revise, HypothesisState};
use crate::grammar::parse_expression_str;
use crate::perception::PseudoLabel;
use crate::symbol::{symbols_from_str, symbols_to_string};
use crate::table::{make_standard_table, make_xor_table, OperationTable};

pub const API_KEY_ENV: &str = "CHATABL_API_KEY";
pub const API_URL_ENV: &str = "CHATABL_API_URL";
pub const DEFAULT_API_URL: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response has no choices[0].message.content")]
    MalformedResponse,
    #[error("no recorded reply for prompt digest {0}")]
    ReplayMiss(String),
    #[error("{API_KEY_ENV} is not set")]
    MissingKey,
    #[error("cassette line {line}: {reason}")]
    BadCassette { line: usize, reason: String },
    #[error("cassette i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Backend {
    fn chat(&self, prompt: &Prompt) -> Result<String, ChatError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn chat(&self, prompt: &Prompt) -> Result<String, ChatError> {
        (**self).chat(prompt)
    }
}

/// Settings that go into every request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for RequestConfig {
    fn default() -> Self {
        RequestConfig {
            model: "gpt-4".to_string(),
            temperature: 0.0,
            max_tokens: Some(512),
        }
    }
}

/// The chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(config: &RequestConfig, prompt: &Prompt) -> Self {
        ChatRequest {
            model: config.model.clone(),
            temperature: config.temperature,
            messages: prompt.messages.clone(),
            max_tokens: config.max_tokens,
        }
    }
}

/// Lowercase hex SHA-256 of the compact JSON request body, fields in the
/// order model, temperature, messages, max_tokens.
pub fn cassette_digest(request: &ChatRequest) -> String {
    let body = serde_json::to_vec(request).expect("request serializes");
    let hash = Sha256::digest(&body);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub prompt_digest: String,
    pub request: ChatRequest,
    pub reply: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Answers from the exact reasoner, formatted in the reply protocol.
///
/// Consistency replies say whether the expression parses and some
/// surviving table explains it. Correction replies run
/// [`revise`] on the bound pseudo-label when the expression is its argmax
/// reading, and on a flat reading of the expression otherwise.
#[derive(Debug, Clone, Copy)]
pub struct MockBackend<'a> {
    state: &'a HypothesisState,
    budget: usize,
    pseudo: Option<&'a PseudoLabel>,
}

const FLAT_CONFIDENCE: f64 = 0.9;

impl<'a> MockBackend<'a> {
    pub fn new(state: &'a HypothesisState, budget: usize) -> Self {
        MockBackend {
            state,
            budget,
            pseudo: None,
        }
    }

    pub fn with_pseudo(mut self, pseudo: &'a PseudoLabel) -> Self {
        self.pseudo = Some(pseudo);
        self
    }

    fn consistency(&self, expression: &str) -> String {
        match parse_expression_str(expression) {
            Err(e) => format!("VERDICT: INCONSISTENT\nThe expression is malformed: {e}."),
            Ok(eq) => {
                let n = self.state.supporting(&eq).len();
                if n > 0 {
                    format!("VERDICT: CONSISTENT\n{n} of {} candidate operations produce {}.", self.state.len(), eq.z)
                } else {
                    format!("VERDICT: INCONSISTENT\nNo candidate operation maps {} and {} to {}.", eq.x, eq.y, eq.z)
                }
            }
        }
    }

    fn correction(&self, expression: &str) -> String {
        let consistent = parse_expression_str(expression).is_ok_and(|eq| self.state.explains(&eq));
        let verdict = if consistent { "CONSISTENT" } else { "INCONSISTENT" };
        let Ok(symbols) = symbols_from_str(expression) else {
            return format!("VERDICT: INCONSISTENT\nThe expression uses unknown symbols.");
        };
        let flat;
        let pseudo = match self.pseudo {
            Some(p) if p.argmax_symbols() == symbols.as_slice() => p,
            _ => {
                flat = PseudoLabel::peaked(&symbols, FLAT_CONFIDENCE).expect("nonempty symbols");
                &flat
            }
        };
        match revise(pseudo, self.state, self.budget) {
            Ok(r) => format!(
                "VERDICT: {verdict}\nCORRECTED: {}\nOPERATION: {}\n{}",
                symbols_to_string(&r.revised_symbols),
                describe_operation(&r.supporting_tables),
                r.trace.join("\n")
            ),
            Err(e) => format!("VERDICT: {verdict}\nNo correction found: {e}."),
        }
    }
}

/// Human-readable name for the first supporting table.
fn describe_operation(codes: &[u16]) -> String {
    let std = make_standard_table().code();
    let xor = make_xor_table().code();
    if codes.contains(&std) {
        "binary addition with carry".to_string()
    } else if codes.contains(&xor) {
        "binary addition without carry".to_string()
    } else if let Some(&c) = codes.first() {
        format!("addition under adder table {}", OperationTable::from_code(c).to_hex())
    } else {
        "unknown".to_string()
    }
}

impl Backend for MockBackend<'_> {
    fn chat(&self, prompt: &Prompt) -> Result<String, ChatError> {
        Ok(match prompt.kind {
            PromptKind::Cdp => self.consistency(&prompt.expression),
            PromptKind::Rdp => self.correction(&prompt.expression),
        })
    }
}

/// Serves replies recorded in a cassette file; a prompt that was never
/// recorded is an error.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    config: RequestConfig,
    replies: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_entries(config: RequestConfig, entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        let mut replies = HashMap::new();
        for e in entries {
            // the first recording of a prompt wins
            replies.entry(e.prompt_digest).or_insert(e.reply);
        }
        ReplayBackend { config, replies }
    }

    pub fn load(config: RequestConfig, path: &Path) -> Result<Self, ChatError> {
        Ok(ReplayBackend::from_entries(config, read_cassette(path)?))
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

pub fn read_cassette(path: &Path) -> Result<Vec<CassetteEntry>, ChatError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| ChatError::BadCassette {
            line: n + 1,
            reason: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

impl Backend for ReplayBackend {
    fn chat(&self, prompt: &Prompt) -> Result<String, ChatError> {
        let digest = cassette_digest(&ChatRequest::new(&self.config, prompt));
        self.replies.get(&digest).cloned().ok_or(ChatError::ReplayMiss(digest))
    }
}

/// Chat-completions client.
#[derive(Debug)]
pub struct LiveBackend {
    url: String,
    key: String,
    config: RequestConfig,
    agent: ureq::Agent,
    retries: usize,
    backoff: Duration,
}

impl LiveBackend {
    pub fn new(url: impl Into<String>, key: impl Into<String>, config: RequestConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        LiveBackend {
            url: url.into(),
            key: key.into(),
            config,
            agent,
            retries: 3,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads the key from `CHATABL_API_KEY` and the endpoint from
    /// `CHATABL_API_URL`, falling back to [`DEFAULT_API_URL`].
    pub fn from_env(config: RequestConfig) -> Result<Self, ChatError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| ChatError::MissingKey)?;
        let url = std::env::var(API_URL_ENV).unwrap_or_else(|_| DEFAULT_API_URL.to_string());
        Ok(LiveBackend::new(url, key, config))
    }

    /// Retries after transport errors, 429 and 5xx; the wait doubles from
    /// `backoff` each time.
    pub fn with_retries(mut self, retries: usize, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    pub fn config(&self) -> &RequestConfig {
        &self.config
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(request)
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ChatError::Status { status, body });
        }
        let value: serde_json::Value = serde_json::from_str(&body).map_err(|_| ChatError::MalformedResponse)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or(ChatError::MalformedResponse)
    }
}

fn retryable(e: &ChatError) -> bool {
    match e {
        ChatError::Transport(_) => true,
        ChatError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl Backend for LiveBackend {
    fn chat(&self, prompt: &Prompt) -> Result<String, ChatError> {
        let request = ChatRequest::new(&self.config, prompt);
        let mut wait = self.backoff;
        let mut tries = 0;
        loop {
            match self.attempt(&request) {
                Err(e) if tries < self.retries && retryable(&e) => {
                    tries += 1;
                    std::thread::sleep(wait);
                    wait *= 2;
                }
                other => return other,
            }
        }
    }
}

/// Forwards to another backend and appends every exchange to a cassette.
pub struct RecordingBackend<B> {
    inner: B,
    config: RequestConfig,
    out: Mutex<File>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, config: RequestConfig, cassette: &Path) -> Result<Self, ChatError> {
        let out = OpenOptions::new().create(true).append(true).open(cassette)?;
        Ok(RecordingBackend {
            inner,
            config,
            out: Mutex::new(out),
        })
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn chat(&self, prompt: &Prompt) -> Result<String, ChatError> {
        let reply = self.inner.chat(prompt)?;
        let request = ChatRequest::new(&self.config, prompt);
        let entry = CassetteEntry {
            prompt_digest: cassette_digest(&request),
            request,
            reply: reply.clone(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        let line = serde_json::to_string(&entry).expect("cassette entry serializes");
        let mut out = self.out.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(out, "{line}")?;
        out.flush()?;
        Ok(reply)
    }
}
