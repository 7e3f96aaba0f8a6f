//! Remote-LLM policy: renders the exclusion or ranking prompt, sends it to
//! an OpenAI-compatible chat completion endpoint, and parses the answer.
//!
//! Transcripts of request/response pairs can be recorded to a JSON-lines
//! file and replayed offline.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::warn;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{ChatMessage, PromptTemplate, RankerKind};
use super::thought::{render_preamble, retrieve_thought_template, TraceStore};
use super::{ExclusionDecision, Mode, Policy, PolicyError, RankingDecision};
use crate::parse::{extract_reasoning, parse_exclusion, parse_ranking, MatchConfig};
use crate::types::{Candidate, RankingTask};

pub const API_KEY_ENV: &str = "RANKER_API_KEY";
pub const API_BASE_ENV: &str = "RANKER_API_BASE";

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("http: {0}")]
    Http(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("no recorded response for this request")]
    NoRecording,
    #[error("transcript io: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript line {line}: {source}")]
    Transcript { line: usize, source: serde_json::Error },
}

impl From<RemoteError> for PolicyError {
    fn from(e: RemoteError) -> Self {
        PolicyError::RemoteFailure(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, RemoteError>;
}

impl<C: CompletionClient + ?Sized> CompletionClient for Box<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, RemoteError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryConfig {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Blocking client for `POST {base}/chat/completions`.
pub struct HttpCompletionClient {
    base_url: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    retry: RetryConfig,
}

impl HttpCompletionClient {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, retry: RetryConfig) -> Result<Self, RemoteError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| RemoteError::Http(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            http,
            retry,
        })
    }

    /// Base URL from `RANKER_API_BASE` unless given, key from `RANKER_API_KEY`.
    pub fn from_env(base_url: Option<String>, retry: RetryConfig) -> Result<Self, RemoteError> {
        let base = base_url
            .or_else(|| std::env::var(API_BASE_ENV).ok())
            .ok_or_else(|| RemoteError::Http(format!("no base URL: set {API_BASE_ENV} or configure one")))?;
        Self::new(base, std::env::var(API_KEY_ENV).ok(), retry)
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, (bool, RemoteError)> {
        let mut req = self
            .http
            .post(format!("{}/chat/completions", self.base_url))
            .json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, RemoteError::Http(e.to_string())))?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            let body = resp.text().unwrap_or_default();
            return Err((retryable, RemoteError::Status { status: status.as_u16(), body }));
        }
        let value: serde_json::Value = resp.json().map_err(|e| (false, RemoteError::Malformed(e.to_string())))?;
        completion_text(&value).ok_or_else(|| (false, RemoteError::Malformed(value.to_string())))
    }
}

fn completion_text(value: &serde_json::Value) -> Option<String> {
    let choice = value.get("choices")?.get(0)?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(|c| c.as_str())
        .map(str::to_string)
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, RemoteError> {
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err((true, e)) if attempt < self.retry.max_retries => {
                    let delay = self.retry.base_delay * 2u32.pow(attempt);
                    warn!("completion attempt {} failed ({e}); retrying in {delay:?}", attempt + 1);
                    thread::sleep(delay);
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

/// One line of a transcript file. Records without a request are replayed
/// in file order regardless of what is asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<CompletionRequest>,
    pub response: String,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, RemoteError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| RemoteError::Transcript { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

/// Replays recorded responses. Keyed records match on model and messages;
/// unkeyed records are served in order.
pub struct ReplayClient {
    keyed: HashMap<String, VecDeque<String>>,
    sequential: Mutex<VecDeque<String>>,
}

fn replay_key(model: &str, messages: &[ChatMessage]) -> String {
    serde_json::to_string(&(model, messages)).expect("messages serialize")
}

impl ReplayClient {
    pub fn new(records: Vec<TranscriptRecord>) -> Self {
        let mut keyed: HashMap<String, VecDeque<String>> = HashMap::new();
        let mut sequential = VecDeque::new();
        for r in records {
            match r.request {
                Some(req) => keyed
                    .entry(replay_key(&req.model, &req.messages))
                    .or_default()
                    .push_back(r.response),
                None => sequential.push_back(r.response),
            }
        }
        Self {
            keyed,
            sequential: Mutex::new(sequential),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, RemoteError> {
        Ok(Self::new(read_transcript(path)?))
    }
}

impl CompletionClient for ReplayClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, RemoteError> {
        // Keyed responses repeat their last entry so identical prompts replay identically.
        if let Some(q) = self.keyed.get(&replay_key(&request.model, &request.messages)) {
            return q.front().cloned().ok_or(RemoteError::NoRecording);
        }
        self.sequential
            .lock()
            .expect("replay queue poisoned")
            .pop_front()
            .ok_or(RemoteError::NoRecording)
    }
}

/// Forwards to an inner client and appends each exchange to a transcript.
pub struct RecordingClient<C> {
    inner: C,
    sink: Mutex<File>,
    path: PathBuf,
}

impl<C: CompletionClient> RecordingClient<C> {
    pub fn new(inner: C, path: impl Into<PathBuf>) -> Result<Self, RemoteError> {
        let path = path.into();
        let sink = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            inner,
            sink: Mutex::new(sink),
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<C: CompletionClient> CompletionClient for RecordingClient<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, RemoteError> {
        let response = self.inner.complete(request)?;
        let rec = TranscriptRecord {
            request: Some(request.clone()),
            response: response.clone(),
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        let mut sink = self.sink.lock().expect("transcript sink poisoned");
        writeln!(sink, "{line}")?;
        Ok(response)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Send the assistant opening as a prefilled final message.
    pub prefill: bool,
    pub matching: MatchConfig,
    /// Number of thought templates injected per prompt; 0 disables it.
    pub cot_top_k: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            model: "default".into(),
            temperature: 0.9,
            max_tokens: 1024,
            prefill: false,
            matching: MatchConfig::default(),
            cot_top_k: 0,
        }
    }
}

pub struct RemotePolicy {
    client: Box<dyn CompletionClient>,
    config: RemoteConfig,
    thoughts: TraceStore,
}

impl RemotePolicy {
    pub fn new(client: Box<dyn CompletionClient>, config: RemoteConfig) -> Self {
        Self {
            client,
            config,
            thoughts: TraceStore::new(),
        }
    }

    pub fn with_thoughts(mut self, store: TraceStore) -> Self {
        self.thoughts = store;
        self
    }

    fn preamble(&self, task: &RankingTask) -> Option<String> {
        if self.config.cot_top_k == 0 {
            return None;
        }
        let found = retrieve_thought_template(&task.query.text, &self.thoughts, self.config.cot_top_k);
        Some(render_preamble(&found)).filter(|p| !p.is_empty())
    }

    pub fn request_for(&self, ranker: RankerKind, task: &RankingTask, pool: &[&Candidate]) -> CompletionRequest {
        let template = PromptTemplate::for_task(ranker, task.scenario.kind);
        let preamble = self.preamble(task);
        let rendered = template.render(task, pool, preamble.as_deref());
        CompletionRequest {
            model: self.config.model.clone(),
            messages: rendered.messages(self.config.prefill),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        }
    }
}

impl Policy for RemotePolicy {
    fn name(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn decide_exclusion(
        &self,
        task: &RankingTask,
        pool: &[&Candidate],
        _mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ExclusionDecision, PolicyError> {
        if pool.is_empty() {
            return Err(PolicyError::EmptyPool);
        }
        let request = self.request_for(RankerKind::Iterative, task, pool);
        let text = self.client.complete(&request)?;
        let reasoning = extract_reasoning(&text);
        let (excluded, log_prob, fallback) = match parse_exclusion(&text, pool, self.config.matching) {
            Ok(id) => (id, 0.0, false),
            Err(_) => {
                let i = rng.random_range(0..pool.len());
                warn!(
                    "task {}: answer matched no pool candidate, excluding {:?} at random",
                    task.id, pool[i].id
                );
                (pool[i].id.clone(), -(pool.len() as f64).ln(), true)
            }
        };
        Ok(ExclusionDecision {
            excluded,
            log_prob,
            raw_text: Some(text),
            reasoning,
            value_estimate: None,
            fallback,
        })
    }

    fn decide_ranking(&self, task: &RankingTask, _mode: Mode, _rng: &mut dyn RngCore) -> Result<RankingDecision, PolicyError> {
        let pool: Vec<&Candidate> = task.candidates.iter().collect();
        let request = self.request_for(RankerKind::Direct, task, &pool);
        let text = self.client.complete(&request)?;
        Ok(RankingDecision {
            raw: parse_ranking(&text, task, self.config.matching),
            log_prob: 0.0,
            raw_text: Some(text),
            value_estimate: None,
        })
    }
}
