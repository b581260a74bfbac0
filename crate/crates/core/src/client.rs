//! Chat-completion client shared by the remote disambiguation and generation
//! backends.
//!
//! Wire contract: `POST base_url` with `{model, messages: [{role, content}],
//! temperature}` and a bearer token read from the configured environment
//! variable; the reply text is `choices[0].message.content`.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparql::{millis, secs};
use crate::throttle::{backoff_delay, Semaphore};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("invalid client configuration: {0}")]
    InvalidConfig(String),
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("service returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerClientConfig {
    /// Full URL of the chat-completions endpoint.
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key; `None` sends no
    /// authorization header.
    pub api_key_env: Option<String>,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_in_flight: usize,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
}

impl Default for ReasonerClientConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            temperature: 0.0,
            max_in_flight: 4,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl ReasonerClientConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.timeout.is_zero() {
            return Err(ClientError::InvalidConfig(
                "timeout must be positive".into(),
            ));
        }
        if self.base_url.trim().is_empty() {
            return Err(ClientError::InvalidConfig("base_url is empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ClientError::InvalidConfig(
                "max_in_flight must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that turns a prompt into a completion.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;

    /// Retry budget callers may spend on unparseable replies.
    fn max_retries(&self) -> u32 {
        0
    }
}

impl<F> ChatBackend for F
where
    F: Fn(&str) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        self(prompt)
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Blocking HTTP client with bounded in-flight requests and exponential
/// backoff on transport errors, 429 and 5xx.
pub struct ChatClient {
    config: ReasonerClientConfig,
    http: Client,
    gate: Semaphore,
    api_key: Option<String>,
}

impl ChatClient {
    /// Reads the API key from the configured environment variable up front,
    /// so a missing key fails here rather than on the first request.
    pub fn new(config: ReasonerClientConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            None => None,
            Some(var) => {
                Some(std::env::var(var).map_err(|_| ClientError::MissingApiKey(var.clone()))?)
            }
        };
        let http = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            gate: Semaphore::new(config.max_in_flight),
            api_key,
            config,
            http,
        })
    }

    pub fn config(&self) -> &ReasonerClientConfig {
        &self.config
    }

    fn attempt(
        &self,
        body: &ChatRequest<'_>,
        key: Option<&str>,
    ) -> Result<String, (bool, ClientError)> {
        let _permit = self.gate.acquire();
        let mut req = self.http.post(&self.config.base_url).json(body);
        if let Some(key) = key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            (
                true,
                ClientError::Transport {
                    attempts: 1,
                    message: e.to_string(),
                },
            )
        })?;
        let status = resp.status();
        let text = resp.text().unwrap_or_default();
        if !status.is_success() {
            let retry = status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error();
            return Err((
                retry,
                ClientError::Status {
                    status: status.as_u16(),
                    body: text.chars().take(200).collect(),
                },
            ));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| (false, ClientError::MalformedResponse(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                (
                    false,
                    ClientError::MalformedResponse("no choices[0].message.content".into()),
                )
            })
    }
}

impl ChatBackend for ChatClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: [Message {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.temperature,
        };
        let mut attempt = 0;
        loop {
            match self.attempt(&body, self.api_key.as_deref()) {
                Ok(text) => return Ok(text),
                Err((true, err)) if attempt < self.config.max_retries => {
                    let delay = backoff_delay(self.config.backoff_base, attempt, MAX_BACKOFF);
                    log::debug!("chat request failed ({err}); retrying in {delay:?}");
                    thread::sleep(delay);
                    attempt += 1;
                }
                Err((_, ClientError::Transport { message, .. })) => {
                    return Err(ClientError::Transport {
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err((_, err)) => return Err(err),
            }
        }
    }

    fn max_retries(&self) -> u32 {
        self.config.max_retries
    }
}
