use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_ENDPOINT: &str = "URBANFORGE_LLM_ENDPOINT";
pub const ENV_KEY: &str = "URBANFORGE_LLM_KEY";
pub const ENV_MODEL: &str = "URBANFORGE_LLM_MODEL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompletionError {
    #[error("completion service unavailable: {0}")]
    Unavailable(String),
    #[error("completion request timed out")]
    Timeout,
    #[error("completion service answered HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected completion response: {0}")]
    BadResponse(String),
    #[error("completion client is not configured: {0}")]
    NotConfigured(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// A text-completion service. Every call either answers, times out or errors.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, CompletionError>;
}

/// Chat-completions client over HTTP.
///
/// Sends `{"model", "messages", "temperature": 0}` and reads the reply text
/// from `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpCompletionClient {
    pub endpoint: String,
    pub model: String,
    pub key: Option<String>,
    pub timeout: Duration,
    agent: ureq::Agent,
}

impl HttpCompletionClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpCompletionClient {
            endpoint: endpoint.into(),
            model: model.into(),
            key,
            timeout,
            agent,
        }
    }

    /// Reads endpoint, key and model from the `URBANFORGE_LLM_*` variables.
    pub fn from_env(timeout: Duration) -> Result<Self, CompletionError> {
        let endpoint = std::env::var(ENV_ENDPOINT).map_err(|_| CompletionError::NotConfigured(format!("{ENV_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_MODEL).map_err(|_| CompletionError::NotConfigured(format!("{ENV_MODEL} is not set")))?;
        let key = std::env::var(ENV_KEY).ok();
        Ok(Self::new(endpoint, model, key, timeout))
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, CompletionError> {
        let body = ChatRequest {
            model: &self.model,
            messages,
            temperature: 0.0,
        };
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => CompletionError::Timeout,
            other => CompletionError::Unavailable(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| CompletionError::BadResponse(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(CompletionError::Http { status, body: text });
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CompletionError::BadResponse(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CompletionError::BadResponse("missing choices[0].message.content".into()))
    }
}

/// Replays canned replies in order and records every request. For offline
/// runs and tests.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    replies: Mutex<VecDeque<Result<String, CompletionError>>>,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedClient {
    pub fn new(replies: impl IntoIterator<Item = Result<String, CompletionError>>) -> Self {
        ScriptedClient {
            replies: Mutex::new(replies.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| Ok(t.into())))
    }

    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests.lock().unwrap().clone()
    }

    pub fn calls(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl CompletionClient for ScriptedClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, CompletionError> {
        self.requests.lock().unwrap().push(messages.to_vec());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(CompletionError::Unavailable("script exhausted".into())))
    }
}
