use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// OpenAI-style chat completion payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl ChatRequest {
    pub fn user(model: &str, prompt: &str, temperature: Option<f64>) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature,
        }
    }
}

/// Outcome of a single failed attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallError {
    /// Worth retrying: connection failure, timeout, 429, 5xx.
    Transient(String),
    Fatal(String),
}

pub trait ChatClient: Sync {
    /// Returns the reply text for one request.
    fn complete(&self, run_index: usize, request: &ChatRequest) -> Result<String, CallError>;
}

/// Blocking HTTP client for OpenAI-compatible chat endpoints.
pub struct HttpChatClient {
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
}

impl HttpChatClient {
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        timeout: Duration,
        min_interval: Duration,
    ) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpChatClient {
            endpoint: endpoint.to_string(),
            api_key,
            http,
            min_interval,
            last_call: Mutex::new(None),
        })
    }

    fn wait_turn(&self) {
        let mut last = self.last_call.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Pull reply text out of common chat response shapes.
pub fn extract_reply(body: &serde_json::Value) -> Option<String> {
    let pointers = [
        "/choices/0/message/content",
        "/choices/0/text",
        "/candidates/0/content/parts/0/text",
        "/content/0/text",
        "/message/content",
    ];
    pointers
        .iter()
        .find_map(|p| body.pointer(p).and_then(|v| v.as_str()).map(str::to_string))
}

impl ChatClient for HttpChatClient {
    fn complete(&self, _run_index: usize, request: &ChatRequest) -> Result<String, CallError> {
        self.wait_turn();
        let mut builder = self.http.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| CallError::Transient(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| CallError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(CallError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(CallError::Fatal(format!("HTTP {status}: {}", truncate(&text, 200))));
        }
        let body: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CallError::Fatal(format!("response is not JSON: {e}")))?;
        extract_reply(&body).ok_or_else(|| CallError::Fatal("no reply text in response".into()))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Serves canned replies by run index. Used for offline runs and tests.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    replies: BTreeMap<usize, Result<String, CallError>>,
}

impl ScriptedClient {
    pub fn new<I: IntoIterator<Item = String>>(replies: I) -> Self {
        ScriptedClient {
            replies: replies.into_iter().map(Ok).enumerate().collect(),
        }
    }

    pub fn with_failure(mut self, run_index: usize, error: CallError) -> Self {
        self.replies.insert(run_index, Err(error));
        self
    }

    /// Reads every `*.txt` file in `dir`, sorted by file name.
    pub fn from_dir(dir: &Path) -> Result<Self, LlmError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| LlmError::Io(dir.display().to_string(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        let mut replies = Vec::with_capacity(paths.len());
        for p in paths {
            replies.push(std::fs::read_to_string(&p).map_err(|e| LlmError::Io(p.display().to_string(), e))?);
        }
        Ok(ScriptedClient::new(replies))
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, run_index: usize, _request: &ChatRequest) -> Result<String, CallError> {
        self.replies
            .get(&run_index)
            .cloned()
            .unwrap_or_else(|| Err(CallError::Fatal(format!("no scripted reply for run {run_index}"))))
    }
}
