//! Chat-completions client for served language models.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::PromptBundle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout(String),
    Transport(String),
}

impl TransportFailure {
    /// Short reason recorded in failed prediction records.
    pub fn reason(&self) -> &'static str {
        match self {
            TransportFailure::Timeout(_) => "timeout",
            TransportFailure::Transport(_) => "transport",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            TransportFailure::Timeout(d) | TransportFailure::Transport(d) => d,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatMessage<'a> {
    pub role: &'static str,
    pub content: &'a str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: Vec<ChatMessage<'a>>,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct RemoteClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    temperature: f64,
    retries: u32,
    backoff_base: Duration,
    api_key: Option<String>,
}

enum Attempt {
    Retry(TransportFailure),
    Fatal(TransportFailure),
}

impl RemoteClient {
    pub fn new(
        endpoint: String,
        model: String,
        timeout: Duration,
        retries: u32,
        backoff_base: Duration,
        temperature: f64,
        api_key: Option<String>,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint,
            model,
            temperature,
            retries,
            backoff_base,
            api_key,
        }
    }

    pub fn request_body<'a>(&'a self, bundle: &'a PromptBundle) -> ChatRequest<'a> {
        ChatRequest {
            model: &self.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &bundle.system_message,
                },
                ChatMessage {
                    role: "user",
                    content: &bundle.user_message,
                },
            ],
            temperature: self.temperature,
        }
    }

    /// Sends the prompt and returns the first choice's content. Timeouts,
    /// connection errors, 429 and 5xx responses are retried with jittered
    /// exponential backoff, at most `retries` times.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<String, TransportFailure> {
        let body = self.request_body(bundle);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(f)) => return Err(f),
                Err(Attempt::Retry(f)) if attempt >= self.retries => return Err(f),
                Err(Attempt::Retry(_)) => {
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let exp = self.backoff_base.saturating_mul(1 << attempt.min(16));
        let capped = exp.min(Duration::from_secs(30));
        capped.mul_f64(rand::rng().random_range(0.5..=1.0))
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> Result<String, Attempt> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify)?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(TransportFailure::Transport(format!(
                "HTTP {status}: {text}"
            ))));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(TransportFailure::Transport(format!(
                "HTTP {status}: {text}"
            ))));
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
            Attempt::Fatal(TransportFailure::Transport(format!(
                "malformed response body ({e}): {text}"
            )))
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(TransportFailure::Transport(format!("response without content: {text}"))))
    }
}

fn classify(err: ureq::Error) -> Attempt {
    let timed_out = match &err {
        ureq::Error::Timeout(_) => true,
        ureq::Error::Io(io) => io.kind() == std::io::ErrorKind::TimedOut,
        _ => false,
    };
    if timed_out {
        Attempt::Retry(TransportFailure::Timeout(err.to_string()))
    } else {
        Attempt::Retry(TransportFailure::Transport(err.to_string()))
    }
}
