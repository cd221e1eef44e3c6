//! The agent-response contract and its implementations.
//!
//! Every agent answers through [`Backend::respond`]: given its private view
//! of the conversation, produce the next utterance. Scripted backends are
//! pure functions of the conversation and serve as the deterministic test
//! oracle; the HTTP backend adapts any hosted chat-completions provider;
//! the console backend puts a human in the society.

mod console;
mod http;
mod scripted;

pub use console::{console_respond, ConsoleBackend};
pub use http::{HttpChatBackend, HttpChatConfig};
pub use scripted::{default_refusal_markers, ScriptedBackend, ScriptedBehavior, ScriptedFn};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One speaker's role relative to the responding agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    /// Incoming text (a question, an instruction, a peer statement).
    User,
    /// The agent's own prior utterances.
    Assistant,
}

/// The per-agent view of an interview: a system prompt plus chronological
/// turns. Backends never mutate the conversation they receive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub system_prompt: String,
    pub turns: Vec<(Speaker, String)>,
}

impl Conversation {
    pub fn new(system_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            turns: Vec::new(),
        }
    }

    pub fn push(&mut self, speaker: Speaker, text: impl Into<String>) {
        self.turns.push((speaker, text.into()));
    }

    pub fn with_user(mut self, text: impl Into<String>) -> Self {
        self.push(Speaker::User, text);
        self
    }

    /// The most recent incoming turn; scripted rules match against this.
    pub fn last_incoming(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|(s, _)| *s == Speaker::User)
            .map(|(_, t)| t.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    /// The model declined to answer. Surfaced, never retried; callers treat
    /// it as an abstention.
    #[error("refusal: {0}")]
    Refusal(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// The universal agent contract.
pub trait Backend: Send + Sync {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError>;

    /// A serial backend does not tolerate concurrent calls; the engine then
    /// serializes fan-outs involving it.
    fn serial(&self) -> bool {
        false
    }

    /// Whether same-input calls are guaranteed to return the same text.
    fn deterministic(&self) -> bool {
        false
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        (**self).respond(conversation)
    }

    fn serial(&self) -> bool {
        (**self).serial()
    }

    fn deterministic(&self) -> bool {
        (**self).deterministic()
    }
}

/// Named backends available to a society; role specs resolve against this.
#[derive(Default, Clone)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn Backend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, backend: Arc<dyn Backend>) {
        self.backends.insert(name.into(), backend);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Backend>> {
        self.backends.get(name).cloned()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.backends.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(|s| s.as_str())
    }
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("names", &self.backends.keys().collect::<Vec<_>>())
            .finish()
    }
}
