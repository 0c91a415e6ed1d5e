//! Chat-completion teachers.
//!
//! Any endpoint that accepts an OpenAI-style `chat/completions` body and
//! returns `choices[0].message.content` (plus optional `usage`) fits behind
//! [`HttpChatEndpoint`]. Other transports implement [`ChatEndpoint`].

use std::fmt;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::cassette::{cache_key, estimate_tokens, CassetteStore, TeacherRecord};
use super::prompt::{render_prompt, PromptTemplate};
use super::response::parse_teacher_response;
use super::{TeacherError, TeacherId};
use crate::corpus::Document;

pub const TEMPERATURE: f64 = 0.01;
pub const TOP_P: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body: model, sampling parameters and a single user message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn new(model: &str, prompt: String) -> Self {
        ChatRequest {
            model: model.to_string(),
            temperature: TEMPERATURE,
            top_p: TOP_P,
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub content: String,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointError {
    pub status: Option<u16>,
    pub message: String,
    /// Worth retrying: timeouts, connection failures, 408, 429 and 5xx.
    pub transient: bool,
}

impl EndpointError {
    pub fn from_status(status: u16, body: &str) -> Self {
        EndpointError {
            status: Some(status),
            message: body.chars().take(500).collect(),
            transient: status == 408 || status == 429 || status >= 500,
        }
    }
}

impl fmt::Display for EndpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.status {
            Some(s) => write!(f, "status {s}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, EndpointError>;
}

#[derive(Debug, Clone)]
pub struct HttpChatEndpoint {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatEndpoint {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpChatEndpoint {
            url: url.into(),
            api_key,
            agent,
        }
    }
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl ChatEndpoint for HttpChatEndpoint {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, EndpointError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(request).map_err(|e| EndpointError {
            status: None,
            message: e.to_string(),
            transient: true,
        })?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| EndpointError {
            status: Some(status),
            message: e.to_string(),
            transient: true,
        })?;
        if !(200..300).contains(&status) {
            return Err(EndpointError::from_status(status, &body));
        }
        let wire: WireReply = serde_json::from_str(&body).map_err(|e| EndpointError {
            status: Some(status),
            message: format!("unexpected reply shape: {e}"),
            transient: false,
        })?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| EndpointError {
                status: Some(status),
                message: "reply has no choices".into(),
                transient: false,
            })?;
        let (tokens_in, tokens_out) = wire
            .usage
            .map_or((None, None), |u| (u.prompt_tokens, u.completion_tokens));
        Ok(ChatReply {
            content,
            tokens_in,
            tokens_out,
        })
    }
}

/// Capped exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Delay after the `failed`-th failed attempt (1-based).
    pub fn delay(&self, failed: u32) -> Duration {
        let factor = 1u32.checked_shl(failed.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, EndpointError>,
    ) -> Result<T, TeacherError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.transient && attempt < self.max_attempts => {
                    log::warn!("attempt {attempt} failed ({e}); retrying");
                    thread::sleep(self.delay(attempt));
                }
                Err(e) => {
                    return Err(TeacherError::Endpoint {
                        attempts: attempt,
                        last: e,
                    })
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherMode {
    /// Only serve stored records; a miss is an error.
    Replay,
    /// Serve stored records, call the endpoint and store on a miss.
    Record,
}

#[derive(Debug, Clone)]
pub struct LlmTeacher {
    pub id: TeacherId,
    pub model: String,
    pub mode: TeacherMode,
    pub template: PromptTemplate,
    pub retry: RetryPolicy,
}

impl LlmTeacher {
    pub fn new(id: impl Into<TeacherId>, model: &str, mode: TeacherMode, template: PromptTemplate) -> Self {
        LlmTeacher {
            id: id.into(),
            model: model.to_string(),
            mode,
            template,
            retry: RetryPolicy::default(),
        }
    }
}

/// Returns the stored record for this (teacher, task, prompt) or, in record
/// mode, calls the endpoint and stores the result.
pub fn invoke_llm_teacher(
    teacher: &LlmTeacher,
    document: &Document,
    store: &CassetteStore,
    endpoint: Option<&dyn ChatEndpoint>,
) -> Result<TeacherRecord, TeacherError> {
    let prompt = render_prompt(&teacher.template, document)?;
    let task = teacher.template.task();
    let key = cache_key(&teacher.id, task, &prompt);
    if let Some(rec) = store.get(&key) {
        return Ok(rec);
    }
    if teacher.mode == TeacherMode::Replay {
        return Err(TeacherError::CassetteMiss {
            key,
            teacher: teacher.id.clone(),
            doc_id: document.id.clone(),
        });
    }
    let endpoint = endpoint.ok_or_else(|| TeacherError::NoEndpoint {
        teacher: teacher.id.clone(),
    })?;

    let request = ChatRequest::new(&teacher.model, prompt);
    let started = Instant::now();
    let reply = teacher.retry.run(|| endpoint.complete(&request))?;
    let latency_ms = started.elapsed().as_millis() as u64;

    let record = TeacherRecord {
        key,
        model: teacher.model.clone(),
        task,
        doc_id: document.id.clone(),
        entities: parse_teacher_response(&reply.content),
        tokens_in: reply
            .tokens_in
            .unwrap_or_else(|| estimate_tokens(&request.messages[0].content)),
        tokens_out: reply.tokens_out.unwrap_or_else(|| estimate_tokens(&reply.content)),
        raw_response: reply.content,
        latency_ms,
    };
    store.insert(&teacher.id, record.clone())?;
    Ok(record)
}
