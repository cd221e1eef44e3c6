//! Remote hosted-chat backend.
//!
//! Speaks the de-facto chat-completions shape: the request carries
//! `{model, temperature, messages: [{role, content}]}` and the answer is
//! read at `choices[0].message.content`. Transport and rate-limit failures
//! retry with exponential backoff up to a cap; refusals and malformed
//! bodies never retry.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Conversation, Speaker};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpChatConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the credential.
    pub credential_env: String,
    /// Reruns are as stable as the provider allows.
    #[serde(default)]
    pub temperature: f64,
    /// Maximum retries after the first attempt.
    #[serde(default = "default_retry_cap")]
    pub retry_cap: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "super::scripted::default_refusal_markers")]
    pub refusal_markers: Vec<String>,
    /// Declare the endpoint intolerant of concurrent calls.
    #[serde(default)]
    pub serial: bool,
}

fn default_retry_cap() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<WireMessage<'a>>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: String,
}

pub struct HttpChatBackend {
    config: HttpChatConfig,
    client: reqwest::blocking::Client,
    /// Completed attempts per call, for observability in tests and logs.
    attempt_log: std::sync::Mutex<Vec<u32>>,
}

impl HttpChatBackend {
    pub fn new(config: HttpChatConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            client,
            attempt_log: std::sync::Mutex::new(Vec::new()),
        })
    }

    /// Attempts used by each completed call (1 = no retry).
    pub fn attempts_per_call(&self) -> Vec<u32> {
        self.attempt_log.lock().expect("attempt log").clone()
    }

    fn credential(&self) -> Result<String, BackendError> {
        std::env::var(&self.config.credential_env).map_err(|_| {
            BackendError::Transport(format!(
                "credential environment variable {} not set",
                self.config.credential_env
            ))
        })
    }

    fn to_wire<'a>(&'a self, conversation: &'a Conversation) -> WireRequest<'a> {
        let mut messages = vec![WireMessage {
            role: "system",
            content: &conversation.system_prompt,
        }];
        for (speaker, text) in &conversation.turns {
            messages.push(WireMessage {
                role: match speaker {
                    Speaker::User => "user",
                    Speaker::Assistant => "assistant",
                },
                content: text,
            });
        }
        WireRequest {
            model: &self.config.model,
            temperature: self.config.temperature,
            messages,
        }
    }

    fn attempt_once(&self, conversation: &Conversation) -> Result<String, BackendError> {
        let credential = self.credential()?;
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(credential)
            .json(&self.to_wire(conversation))
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;

        let status = response.status();
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited(format!("status {status}")));
        }
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Malformed(format!("status {status}")));
        }
        let body: WireResponse = response
            .json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        let text = body
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("response has zero choices".to_string()))?;
        for marker in &self.config.refusal_markers {
            if text.contains(marker.as_str()) {
                return Err(BackendError::Refusal(text.clone()));
            }
        }
        Ok(text)
    }
}

impl Backend for HttpChatBackend {
    /// Performs at most `1 + retry_cap` requests per call.
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        if conversation.system_prompt.is_empty() {
            return Err(BackendError::Malformed(
                "degenerate conversation: no system prompt".to_string(),
            ));
        }
        let mut attempts = 0u32;
        let result = loop {
            attempts += 1;
            match self.attempt_once(conversation) {
                Ok(text) => break Ok(text),
                Err(e @ (BackendError::Refusal(_) | BackendError::Malformed(_))) => break Err(e),
                Err(retryable) => {
                    if attempts > self.config.retry_cap {
                        break Err(retryable);
                    }
                    let backoff =
                        self.config.backoff_base_ms.saturating_mul(1 << (attempts - 1).min(16));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
        };
        self.attempt_log.lock().expect("attempt log").push(attempts);
        result
    }

    fn serial(&self) -> bool {
        self.config.serial
    }
}
